"""Fast marching for the Euclidean eikonal equation ``|grad w| = 1`` on lattices.

The marching loop runs in a compiled extension when it is available and
falls back to a pure-Python kernel otherwise.  Set ``EIKONAL_PURE_PYTHON=1``
to force the fallback.  Both kernels produce bit-identical fields.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..grid import GridField
from . import _march

__all__ = [
    "BACKEND",
    "available_backends",
    "march",
    "FmmProblem",
    "solve_fmm",
    "compare",
    "convergence_order",
    "refinement_study",
    "acceptance_is_monotone",
    "upwind_defect",
    "cone_evaluator",
]

_ext = None
if os.environ.get("EIKONAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _march_ext as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def available_backends() -> list[str]:
    out = ["python"]
    if _ext is not None:
        out.insert(0, "cython")
    return out


def march(values, fixed, shape, spacing, backend: str | None = None):
    """Run the marching kernel; returns ``(values, acceptance order)``."""
    backend = backend or BACKEND
    if backend == "cython":
        if _ext is None:
            raise RuntimeError("compiled kernel is not built")
        return _ext.march(values, fixed, tuple(shape), spacing)
    if backend == "python":
        return _march.march(values, fixed, shape, spacing)
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class FmmProblem:
    """Lattice geometry plus fixed source nodes ``(index tuple, value)``."""

    grid: GridField
    sources: tuple = field(default=())

    def __post_init__(self):
        srcs = tuple((tuple(int(i) for i in idx), float(v)) for idx, v in self.sources)
        if not srcs:
            raise ValueError("at least one source is required")
        for idx, v in srcs:
            if len(idx) != self.grid.d:
                raise ValueError(f"source index {idx} does not match grid dimension {self.grid.d}")
            if any(i < 0 or i >= s for i, s in zip(idx, self.grid.shape)):
                raise ValueError(f"source index {idx} is outside the grid")
            if not math.isfinite(v):
                raise ValueError("source values must be finite")
        object.__setattr__(self, "sources", srcs)

    @classmethod
    def point_sources(cls, grid: GridField, points: Sequence[Sequence[float]], values=None,
                      init_radius: float = 0.0) -> "FmmProblem":
        """Point sources with default value 0.

        With ``init_radius == 0`` each point snaps to its nearest node.  A
        positive radius fixes every node within that distance of a point to
        the exact distance plus the source value, which removes the
        ``h log(1/h)`` error a bare point source adds to first-order marching.
        """
        values = [0.0] * len(points) if values is None else values
        best: dict = {}
        nodes = grid.nodes() if init_radius > 0 else None
        for p, v in zip(points, values):
            p = np.asarray(p, dtype=float)
            if init_radius > 0:
                dist = np.sqrt(np.sum((nodes - p) ** 2, axis=-1))
                cand = [(tuple(i), float(dist[tuple(i)]) + float(v)) for i in np.argwhere(dist <= init_radius)]
            else:
                cand = []
            if not cand:
                idx = np.rint((p - grid.origin) / grid.spacing).astype(int)
                cand = [(tuple(int(i) for i in idx), float(v))]
            for idx, val in cand:
                best[idx] = min(best.get(idx, math.inf), val)
        return cls(grid, tuple(sorted(best.items())))

    def source_points(self) -> np.ndarray:
        return np.array([self.grid.origin + self.grid.spacing * np.array(idx) for idx, _ in self.sources])


def _initial(p: FmmProblem):
    values = np.full(p.grid.shape, np.inf)
    fixed = np.zeros(p.grid.shape, dtype=bool)
    for idx, v in p.sources:
        # duplicated sources keep the smaller value
        values[idx] = min(values[idx], v)
        fixed[idx] = True
    return values, fixed


def solve_fmm(p: FmmProblem, backend: str | None = None, return_order: bool = False):
    """First-order fast marching from the fixed sources at unit speed."""
    values, fixed = _initial(p)
    T, order = march(values, fixed, p.grid.shape, p.grid.spacing, backend=backend)
    out = p.grid.with_values(T)
    return (out, order) if return_order else out


def acceptance_is_monotone(field: GridField, order) -> bool:
    accepted = field.values.ravel()[np.asarray(order)]
    return bool(np.all(np.diff(accepted) >= 0.0))


def upwind_defect(p: FmmProblem, field: GridField) -> float:
    """Max ``|w_i - update_i(w)|`` over non-source nodes of a solved field."""
    T = [float(v) for v in field.values.ravel()]
    shape = list(field.shape)
    d = len(shape)
    strides = [1] * d
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * shape[ax + 1]
    _, fixed = _initial(p)
    fixed = fixed.ravel()
    worst = 0.0
    for i in range(len(T)):
        if fixed[i] or not math.isfinite(T[i]):
            continue
        coords = [int(c) for c in np.unravel_index(i, shape)]
        t = _march.local_update(T, i, coords, shape, strides, list(field.spacing))
        worst = max(worst, abs(t - T[i]))
    return worst


def _evaluate(analytic, geometry: GridField) -> np.ndarray:
    if isinstance(analytic, GridField):
        if not analytic.same_geometry(geometry):
            raise ValueError("geometry mismatch between numeric and analytic fields")
        return analytic.values
    vals = np.asarray(analytic(geometry.nodes()), dtype=float)
    if vals.shape != geometry.shape:
        raise ValueError("analytic evaluator returned the wrong shape")
    return vals


def compare(numeric: GridField, analytic: GridField | Callable) -> dict:
    """L-infinity and root-mean-square error over nodes finite in both fields.

    ``analytic`` is a field on the same lattice or a callable taking node
    coordinates of shape ``(*shape, d)``.
    """
    ref = _evaluate(analytic, numeric)
    ok = np.isfinite(numeric.values) & np.isfinite(ref)
    if not np.any(ok):
        raise ValueError("no node is finite in both fields")
    err = np.abs(numeric.values[ok] - ref[ok])
    return {"linf": float(err.max()), "l2": float(np.sqrt(np.mean(err * err))), "nodes": int(ok.sum())}


def convergence_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    if e_fine == 0.0 or e_coarse == 0.0:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def refinement_study(make_problem: Callable[[int], FmmProblem], analytic, sizes: Sequence[int] = (65, 129),
                     backend: str | None = None) -> dict:
    """Solve at each lattice size and report errors plus the order between the last two."""
    runs = []
    for n in sizes:
        p = make_problem(n)
        rep = compare(solve_fmm(p, backend=backend), analytic)
        rep.update(size=int(n), h=float(p.grid.spacing.max()))
        runs.append(rep)
    a, b = runs[-2], runs[-1]
    return {
        "runs": runs,
        "linf": b["linf"],
        "l2": b["l2"],
        "order": convergence_order(a["linf"], b["linf"], a["h"], b["h"]),
    }


def cone_evaluator(centers, values=None, **solve_kw) -> Callable:
    """Pointwise min over Euclidean distance cones, each computed from the
    two-variable envelope solution with ``Psi = 0``.

    Each offset is folded so the second coordinate carries the larger
    magnitude; the stationary parameter then stays inside the search box.
    """
    from ..algebra import Poly
    from ..solutions import eval_euclid2_many

    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.zeros(len(centers)) if values is None else np.asarray(values, dtype=float)
    zero = Poly.zero(1)

    def evaluate(points):
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        best = np.full(len(flat), np.inf)
        for c, v in zip(centers, values):
            off = np.abs(flat - c)
            folded = np.stack([off.min(axis=1), off.max(axis=1)], axis=1)
            dist = np.zeros(len(flat))
            live = folded[:, 1] > 0.0
            roots = eval_euclid2_many(zero, folded[live], **solve_kw)
            dist[live] = [r[-1].u if r else np.nan for r in roots]
            best = np.fmin(best, dist + v)
        return best.reshape(pts.shape[:-1])

    return evaluate
