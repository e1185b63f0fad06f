"""Sampled scalar fields on rectangular lattices and their text format.

File layout::

    # grid d=2 origin=0.5,1 spacing=0.1,0.1 shape=16,11
    <values, row-major, comma separated, one last-axis row per line>

Missing nodes are written as ``nan``.  Other ``#`` lines are comments.
"""
from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["GridField", "GridFormatError", "read_grid", "write_grid", "central_gradient", "atomic_write"]


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridField:
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if origin.shape != spacing.shape or values.ndim != origin.size:
            raise ValueError("origin, spacing and values disagree on dimension")
        if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise ValueError("spacing must be strictly positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, func, origin: Sequence[float], spacing: Sequence[float], shape: Sequence[int]) -> "GridField":
        """Evaluate ``func(points)`` with points of shape ``(*shape, d)``."""
        geom = cls(origin, spacing, np.zeros(tuple(shape)))
        return geom.with_values(np.asarray(func(geom.nodes()), dtype=float))

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def nodes(self) -> np.ndarray:
        axes = [self.axis(i) for i in range(self.d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_values(self, values) -> "GridField":
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ValueError("shape mismatch")
        return GridField(self.origin, self.spacing, values)

    def same_geometry(self, other: "GridField", rtol: float = 1e-12) -> bool:
        return (
            self.shape == other.shape
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=1e-14)
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
        )

    def header(self) -> str:
        fmt = lambda a: ",".join(repr(float(v)) for v in a)
        return (
            f"# grid d={self.d} origin={fmt(self.origin)} spacing={fmt(self.spacing)} "
            f"shape={','.join(str(s) for s in self.shape)}"
        )


def central_gradient(field: GridField) -> list[np.ndarray]:
    """Second-order central differences on interior nodes (shape reduced by 2 per axis)."""
    if any(s < 3 for s in field.shape):
        raise ValueError("grid too small: need at least 3 nodes per axis")
    v = field.values
    inner = tuple(slice(1, -1) for _ in range(field.d))
    grads = []
    for ax in range(field.d):
        hi = list(inner)
        lo = list(inner)
        hi[ax] = slice(2, None)
        lo[ax] = slice(None, -2)
        grads.append((v[tuple(hi)] - v[tuple(lo)]) / (2.0 * field.spacing[ax]))
    return grads


def _format_values(values: np.ndarray) -> str:
    rows = values.reshape(-1, values.shape[-1]) if values.ndim else values.reshape(1, 1)
    buf = io.StringIO()
    for row in rows:
        buf.write(",".join("nan" if np.isnan(v) else repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grid(field: GridField, path, comments: Sequence[str] = ()) -> None:
    lines = [field.header()] + [f"# {c}" for c in comments]
    atomic_write(path, "\n".join(lines) + "\n" + _format_values(field.values))


def _parse_header(line: str):
    fields = {}
    for tok in line[1:].split()[1:]:
        if "=" not in tok:
            raise GridFormatError(f"bad header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        d = int(fields["d"])
        origin = [float(t) for t in fields["origin"].split(",")]
        spacing = [float(t) for t in fields["spacing"].split(",")]
        shape = [int(t) for t in fields["shape"].split(",")]
    except (KeyError, ValueError) as exc:
        raise GridFormatError(f"bad grid header: {line.strip()!r}") from exc
    if not (len(origin) == len(spacing) == len(shape) == d):
        raise GridFormatError("header dimension mismatch")
    return origin, spacing, shape


def read_grid(path) -> GridField:
    header = None
    tokens: list[str] = []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if header is None and s[1:].split()[:1] == ["grid"]:
                header = _parse_header(s)
            continue
        tokens.extend(t for t in s.replace(",", " ").split())
    if header is None:
        raise GridFormatError("missing '# grid' header")
    origin, spacing, shape = header
    if len(tokens) != int(np.prod(shape)):
        raise GridFormatError(f"expected {int(np.prod(shape))} values, found {len(tokens)}")
    try:
        values = np.array([float(t) for t in tokens]).reshape(shape)
    except ValueError as exc:
        raise GridFormatError(str(exc)) from exc
    try:
        return GridField(origin, spacing, values)
    except ValueError as exc:
        raise GridFormatError(str(exc)) from exc
