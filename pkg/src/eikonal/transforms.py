"""Legendre-type contact transformation and hodograph transformation on grids.

Both transforms invert a strictly monotone one-dimensional relation per
lattice line with monotone cubic (PCHIP) interpolation.  Targets outside the
range attained on a line are left as ``nan``; nothing is extrapolated.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .grid import GridField, central_gradient

__all__ = [
    "TransformError",
    "legendre_1var",
    "inverse_legendre_1var",
    "verify_linearized_ode",
    "linearized_ode_deviation",
    "hodograph",
    "verify_eikonal_image",
    "verify_hj",
]

MAX_MISSING_FRACTION = 0.5


class TransformError(ValueError):
    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


def _finite_run(mask: np.ndarray) -> slice:
    """Longest contiguous run of True values."""
    best = (0, 0)
    start = None
    for i, ok in enumerate(np.append(mask, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return slice(*best)


def _monotone_direction(values: np.ndarray) -> int:
    d = np.diff(values)
    if np.all(d > 0):
        return 1
    if np.all(d < 0):
        return -1
    return 0


def _target_axis(ranges, count, target):
    if target is not None:
        origin, spacing, n = target
        return origin + spacing * np.arange(int(n)), (float(origin), float(spacing))
    lo = max(r[0] for r in ranges)
    hi = min(r[1] for r in ranges)
    if not hi > lo:
        raise TransformError("lines share no common range; pass an explicit target lattice")
    spacing = (hi - lo) / (count - 1)
    return lo + spacing * np.arange(count), (lo, spacing)


def _check_missing(col: np.ndarray, index, what: str):
    if np.mean(np.isnan(col)) > MAX_MISSING_FRACTION:
        raise TransformError(f"{what} {index}: more than half of the targets are outside the attained range", index)


def legendre_1var(u: GridField, target: tuple[float, float, int] | None = None) -> GridField:
    """``H(y_1, y_2) = x_1 y_1 - u`` with ``y_1 = u_{x_1}``, ``y_2 = x_2``.

    ``u`` lives on ``(x_1, x_2)``.  ``target`` is ``(origin, spacing, count)``
    for the ``y_1`` axis; by default the common gradient range of all slices
    is used with the same node count as ``x_1``.  The same call inverts the
    transform: applied to ``H`` it returns ``y_1 H_{y_1} - H`` on ``x_1``.
    """
    if u.d != 2:
        raise ValueError("legendre_1var needs a field over two variables")
    if u.shape[0] < 3:
        raise ValueError("grid too small: need at least 3 nodes per axis")
    x = u.axis(0)
    h = u.spacing[0]
    slices = []
    for j in range(u.shape[1]):
        col = u.values[:, j]
        run = _finite_run(np.isfinite(col))
        if run.stop - run.start < 3:
            slices.append(None)
            continue
        xs, us = x[run], col[run]
        g = np.gradient(us, h, edge_order=2)
        direction = _monotone_direction(g)
        if direction == 0:
            raise TransformError(f"slice {j}: u_x1 is not strictly monotone", j)
        slices.append((xs, us, g, direction))
    live = [s for s in slices if s is not None]
    if not live:
        raise TransformError("no slice has enough finite nodes")
    ranges = [(float(np.min(s[2])), float(np.max(s[2]))) for s in live]
    y, (y0, hy) = _target_axis(ranges, u.shape[0], target)

    H = np.full((len(y), u.shape[1]), np.nan)
    for j, s in enumerate(slices):
        if s is None:
            continue
        xs, us, g, direction = s
        order = slice(None) if direction > 0 else slice(None, None, -1)
        inside = (y >= g.min()) & (y <= g.max())
        xstar = PchipInterpolator(g[order], xs[order])(y[inside])
        ustar = CubicHermiteSpline(xs, us, g)(xstar)
        H[inside, j] = xstar * y[inside] - ustar
        _check_missing(H[:, j], j, "slice")
    return GridField([y0, u.origin[1]], [hy, u.spacing[1]], H)


inverse_legendre_1var = legendre_1var


def linearized_ode_deviation(y1, H_y2) -> np.ndarray:
    return np.abs(np.asarray(H_y2) ** 2 + np.asarray(y1) ** 2 - 1.0)


def verify_linearized_ode(H: GridField) -> float:
    """Max ``|H_{y_2}^2 + y_1^2 - 1|`` with central differences in ``y_2``."""
    if H.d != 2:
        raise ValueError("expected a field over (y_1, y_2)")
    if H.shape[1] < 3:
        raise ValueError("grid too small: need at least 3 nodes along y_2")
    Hy2 = (H.values[:, 2:] - H.values[:, :-2]) / (2.0 * H.spacing[1])
    dev = linearized_ode_deviation(H.axis(0)[:, None], Hy2)
    return float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else float("nan")


def hodograph(u: GridField, target: tuple[float, float, int] | None = None) -> GridField:
    """Swap ``u`` and ``x_0``: returns ``w(y_0, y_a) = x_0`` where ``u(x_0, y_a) = y_0``.

    Axis 0 of ``u`` is ``x_0``; every spatial column must be strictly
    monotone in ``x_0``.  ``target`` sets the ``y_0`` lattice as
    ``(origin, spacing, count)``; the default is the range common to all
    columns with the same node count.
    """
    if u.shape[0] < 3:
        raise ValueError("grid too small: need at least 3 nodes per axis")
    x0 = u.axis(0)
    vals = u.values.reshape(u.shape[0], -1)
    cols = []
    for j in range(vals.shape[1]):
        col = vals[:, j]
        run = _finite_run(np.isfinite(col))
        if run.stop - run.start < 2:
            cols.append(None)
            continue
        xs, us = x0[run], col[run]
        direction = _monotone_direction(us)
        if direction == 0:
            raise TransformError(f"column {np.unravel_index(j, u.shape[1:])}: u is not strictly monotone in x_0", j)
        cols.append((xs, us, direction))
    live = [c for c in cols if c is not None]
    if not live:
        raise TransformError("no column has enough finite nodes")
    ranges = [(float(np.min(c[1])), float(np.max(c[1]))) for c in live]
    y0, (o0, h0) = _target_axis(ranges, u.shape[0], target)

    w = np.full((len(y0), vals.shape[1]), np.nan)
    for j, c in enumerate(cols):
        if c is None:
            continue
        xs, us, direction = c
        order = slice(None) if direction > 0 else slice(None, None, -1)
        inside = (y0 >= us.min()) & (y0 <= us.max())
        w[inside, j] = PchipInterpolator(us[order], xs[order])(y0[inside])
        _check_missing(w[:, j], np.unravel_index(j, u.shape[1:]), "column")
    origin = np.concatenate([[o0], u.origin[1:]])
    spacing = np.concatenate([[h0], u.spacing[1:]])
    return GridField(origin, spacing, w.reshape((len(y0),) + u.shape[1:]))


def verify_eikonal_image(w: GridField) -> float:
    """Max ``|w_{y_a} w_{y_a} - 1|`` over interior nodes (spatial axes ``1..n``)."""
    grads = central_gradient(w)
    dev = np.abs(sum(g * g for g in grads[1:]) - 1.0)
    return float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else float("nan")


def verify_hj(v: GridField) -> float:
    """Max ``|v_{y_a} v_{y_a} - 2 v_{y_0}|`` over interior nodes."""
    grads = central_gradient(v)
    dev = np.abs(sum(g * g for g in grads[1:]) - 2.0 * grads[0])
    return float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else float("nan")
