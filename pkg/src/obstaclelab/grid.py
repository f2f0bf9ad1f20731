"""Uniform rectangular grids, bilinear interpolation and grid-field files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coeffs import DomainError, ValidationError

__all__ = ["Grid", "write_grid_field", "read_grid_field", "write_grid_csv"]

_MAGIC = "OBSTACLELAB-GRID 1"


@dataclass(frozen=True)
class Grid:
    """Uniform grid with spacing ``h`` on the box ``bounds``.

    Node ``(i, j)`` sits at ``(a_0 + i h, a_1 + j h)``; fields are arrays of
    shape ``shape`` indexed ``[i, j]`` (first axis along ``x_1``).
    """

    dim: int
    bounds: tuple
    h: float
    shape: tuple

    @classmethod
    def from_bounds(cls, bounds, h: float) -> "Grid":
        bounds = tuple((float(a), float(b)) for a, b in bounds)
        if h <= 0:
            raise ValidationError("grid spacing must be positive")
        shape = []
        for a, b in bounds:
            if b <= a:
                raise ValidationError(f"empty interval [{a}, {b}]")
            m = (b - a) / h
            k = round(m)
            if abs(m - k) > 1e-9 * max(1.0, m):
                raise ValidationError(f"h={h!r} does not divide [{a}, {b}] into an integer number of cells")
            shape.append(int(k) + 1)
        if min(shape) < 3:
            raise ValidationError("grid needs at least one interior node per axis")
        return cls(dim=len(bounds), bounds=bounds, h=float(h), shape=tuple(shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def axis(self, k: int) -> np.ndarray:
        return self.bounds[k][0] + self.h * np.arange(self.shape[k])

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        axes = [self.axis(k) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def node(self, index) -> np.ndarray:
        return self.lower + self.h * np.asarray(index, dtype=float)

    def index_of(self, x) -> np.ndarray:
        """Fractional node index of a point (inverse of :meth:`node`)."""
        return (np.asarray(x, dtype=float) - self.lower) / self.h

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(1, -1),) * self.dim] = True
        return m

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.min(np.minimum(x - self.lower, self.upper - x), axis=-1)

    def shifted(self, cells) -> "Grid":
        """The same grid translated by an integer number of cells per axis."""
        off = self.h * np.asarray(cells, dtype=float)
        return Grid.from_bounds([(a + o, b + o) for (a, b), o in zip(self.bounds, off)], self.h)

    def interpolate(self, values: np.ndarray, x, margin: float = 0.0) -> np.ndarray:
        """Multilinear interpolation of a node field at points ``x``.

        ``values`` has shape ``shape`` or ``shape + (m,)`` (several fields at
        once).  Points must lie in the box shrunk by ``margin``; otherwise
        :class:`DomainError` is raised.
        """
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.dim)
        slack = 1e-12 * max(1.0, float(np.max(np.abs(self.upper))))
        if np.any(pts < self.lower + margin - slack) or np.any(pts > self.upper - margin + slack):
            raise DomainError("interpolation point outside the grid")
        values = np.asarray(values)
        extra = values.shape[self.dim:]
        fi = (pts - self.lower) / self.h
        i0 = np.clip(np.floor(fi).astype(np.int64), 0, np.array(self.shape) - 2)
        xi = fi - i0
        if extra:
            xi = xi[:, :, None]
        if self.dim == 2:
            ny = self.shape[1]
            v = values.reshape((-1,) + extra)
            k = i0[:, 0] * ny + i0[:, 1]
            a, b = xi[:, 0], xi[:, 1]
            out = (1 - a) * ((1 - b) * v.take(k, axis=0) + b * v.take(k + 1, axis=0))
            out += a * ((1 - b) * v.take(k + ny, axis=0) + b * v.take(k + ny + 1, axis=0))
        else:
            out = np.zeros((len(pts),) + extra)
            for corner in np.ndindex(*(2,) * self.dim):
                c = np.asarray(corner)
                cc = c[:, None] if extra else c
                w = np.prod(np.where(cc == 1, xi, 1 - xi), axis=1)
                out += w * values[tuple((i0 + c).T)]
        return out.reshape(x.shape[:-1] + extra)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Central differences inside, second-order one-sided at the boundary."""
        return np.stack(np.gradient(values, self.h, edge_order=2), axis=-1)


def _format_header(grid: Grid, meta: dict) -> str:
    lines = [_MAGIC,
             f"dim = {grid.dim}",
             "shape = " + " ".join(str(s) for s in grid.shape),
             "bounds = " + " ".join(repr(v) for b in grid.bounds for v in b),
             f"h = {grid.h!r}"]
    for k in sorted(meta):
        lines.append(f"{k} = {meta[k]}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_grid_field(path, grid: Grid, values: np.ndarray, **meta) -> None:
    """Text header (``key = value`` lines up to ``END``) + row-major float64 payload."""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValidationError(f"field shape {values.shape} does not match grid {grid.shape}")
    buf = io.BytesIO()
    buf.write(_format_header(grid, meta).encode("ascii"))
    buf.write(values.tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def read_grid_field(path):
    """Inverse of :func:`write_grid_field`; returns ``(grid, values, meta)``."""
    raw = Path(path).read_bytes()
    end = raw.find(b"\nEND\n")
    if not raw.startswith(_MAGIC.encode()) or end < 0:
        raise ValidationError(f"{path}: not a grid field file")
    header = raw[:end].decode("ascii").splitlines()[1:]
    meta = {}
    for line in header:
        k, _, v = line.partition("=")
        meta[k.strip()] = v.strip()
    dim = int(meta.pop("dim"))
    shape = tuple(int(s) for s in meta.pop("shape").split())
    bvals = [float(s) for s in meta.pop("bounds").split()]
    h = float(meta.pop("h"))
    grid = Grid(dim=dim, bounds=tuple(zip(bvals[0::2], bvals[1::2])), h=h, shape=shape)
    payload = raw[end + len(b"\nEND\n"):]
    n = math.prod(shape)
    if len(payload) != 8 * n:
        raise ValidationError(f"{path}: payload has {len(payload)} bytes, expected {8 * n}")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return grid, values, meta


def write_grid_csv(path, grid: Grid, **fields) -> None:
    """Small-grid CSV export: one row per node with coordinates and fields."""
    pts = grid.points().reshape(-1, grid.dim)
    names = ["x", "y", "z"][: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + list(fields))
        cols = [np.asarray(v).reshape(-1) for v in fields.values()]
        for k in range(len(pts)):
            w.writerow([repr(float(c)) for c in pts[k]] + [repr(float(c[k])) for c in cols])
