"""Shipped benchmark problems with known solutions.

``radial``
    A = Id, f = 1, contact disk of radius 1/2.
``halfspace``
    A = Id, f = 1, u = (x_1^+)^2 / 2 (regular free boundary {x_1 = 0}).
``singular_line``
    A = Id, f = 1, u = x_1^2 / 2 (every point of {x_1 = 0} singular, k = 1).
``holder_halfspace``
    Planar Hoelder family a(x_1) Id, f(x_1) with the roughness on the free
    boundary; one-sided 1D solution.
``powerlog_singular``
    Planar power_log family (double-Dini); two-sided 1D solution, singular line.

For planar coefficients ``A = a(x_1) Id`` and ``f = f(x_1)`` the function
``u(x_1) = int_0^{x_1} a(t)^{-1} int_0^t f(s) ds dt`` solves
``div(A grad u) = f`` with ``u(0) = u'(0) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coeffs import CoefficientField, ValidationError, make_test_family
from .grid import Grid

__all__ = ["Benchmark", "BENCHMARKS", "make_benchmark", "radial_solution", "planar_solution"]

BOX = ((-1.0, 1.0), (-1.0, 1.0))
RHO = 0.5


def radial_solution(x, rho: float = RHO):
    s = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    sc = np.maximum(s, rho)
    return np.where(s >= rho, sc**2 / 4 - rho**2 / 2 * np.log(sc / rho) - rho**2 / 4, 0.0)


def radial_gradient(x, rho: float = RHO):
    x = np.asarray(x, dtype=float)
    s = np.linalg.norm(x, axis=-1)
    sc = np.maximum(s, rho)
    du = np.where(s >= rho, sc / 2 - rho**2 / (2 * sc), 0.0)
    return (du / sc)[..., None] * x


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gl(fn, a, b):
    """Composite-free 20-point Gauss-Legendre on each interval [a_k, b_k]."""
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[:, None]
    t = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
    return np.sum(fn(t) * _GL_W, axis=1) * 0.5 * (b - a)[:, 0]


def planar_solution(a_fn: Callable, f_fn: Callable, xs, sides: str = "both") -> np.ndarray:
    """``u(x) = int_0^x a^{-1} int_0^t f`` at the abscissae ``xs`` (vectorized a, f of x_1).

    ``sides="positive"`` returns 0 for ``x <= 0`` (half-space type).
    """
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    for sign in (1.0, -1.0):
        if sign < 0 and sides == "positive":
            continue
        sel = sign * xs > 0
        if not sel.any():
            continue
        targets = np.unique(sign * xs[sel])
        # geometric knots resolve the roughness at t = 0
        knots = np.unique(np.concatenate([[0.0], 1e-14 * 1.25 ** np.arange(200), targets]))
        knots = knots[knots <= targets[-1]]
        lo, hi = knots[:-1], knots[1:]
        F_inner = np.concatenate([[0.0], np.cumsum(_gl(lambda t: f_fn(sign * t), lo, hi))])

        def integrand(t, lo=lo, F=F_inner):
            # F(t) = F(lo_k) + int_{lo_k}^t f for t on interval k
            base = F[:-1][:, None]
            inner = np.empty_like(t)
            for j in range(t.shape[1]):
                inner[:, j] = _gl(lambda s: f_fn(sign * s), lo, t[:, j])
            return (base + inner) / a_fn(sign * t)

        U = np.concatenate([[0.0], np.cumsum(_gl(integrand, lo, hi))])
        idx = np.searchsorted(knots, sign * xs[sel])
        out[sel] = U[idx]
    return out


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    field: CoefficientField
    exact: Callable | None
    expected: str                 # "regular" or "singular"
    kernel_dim: int | None = None
    interface: Callable | None = None   # distance of a point to the exact free boundary
    bounds: tuple = BOX

    def grid(self, h: float) -> Grid:
        return Grid.from_bounds(self.bounds, h)

    def boundary(self, x):
        return self.exact(x)


def _planar_exact(field, sides):
    def a_fn(t):
        pts = np.stack([t, np.zeros_like(t)], axis=-1)
        return field.matrix_eval(pts)[..., 0, 0]

    def f_fn(t):
        pts = np.stack([t, np.zeros_like(t)], axis=-1)
        return field.scalar_eval(pts)

    cache = {}

    def exact(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        key = np.unique(x1)
        miss = [v for v in key.tolist() if v not in cache]
        if miss:
            vals = planar_solution(a_fn, f_fn, np.array(miss), sides)
            cache.update(zip(miss, vals.tolist()))
        return np.vectorize(cache.__getitem__, otypes=[float])(x1) if x1.ndim else cache[float(x1)]
    return exact


def _on_line(x):
    return np.abs(np.asarray(x)[..., 0])


def make_benchmark(name: str, **params) -> Benchmark:
    ident = make_test_family("identity", bounds=BOX)
    if name == "radial":
        return Benchmark(name, ident, radial_solution, "regular", None,
                         lambda x: np.abs(np.linalg.norm(np.asarray(x), axis=-1) - RHO))
    if name == "halfspace":
        return Benchmark(name, ident, lambda x: 0.5 * np.maximum(np.asarray(x)[..., 0], 0.0) ** 2,
                         "regular", None, _on_line)
    if name == "singular_line":
        return Benchmark(name, ident, lambda x: 0.5 * np.asarray(x)[..., 0] ** 2, "singular", 1, _on_line)
    if name == "holder_halfspace":
        p = {"alpha": 0.5, "amplitude": 1.0, "f_amplitude": 0.0}
        p.update(params)
        field = make_test_family("holder", bounds=BOX, center=(0.0, 0.0), profile="planar", **p)
        return Benchmark(name, field, _planar_exact(field, "positive"), "regular", None, _on_line)
    if name == "powerlog_singular":
        p = {"p": 3.0, "amplitude": 8.0, "f_amplitude": 0.0}
        p.update(params)
        field = make_test_family("power_log", bounds=BOX, center=(0.0, 0.0), profile="planar", **p)
        return Benchmark(name, field, _planar_exact(field, "both"), "singular", 1, _on_line)
    raise ValidationError(f"unknown benchmark {name!r}")


BENCHMARKS = ("radial", "halfspace", "singular_line", "holder_halfspace", "powerlog_singular")
