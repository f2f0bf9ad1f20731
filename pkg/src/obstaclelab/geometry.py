"""Contact set, free boundary, normalization map and blow-up samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .coeffs import (CoefficientField, DomainError, HolderModulus, ModulusDescriptor, ScaledModulus,
                     SumModulus, ValidationError)
from .quadrature import Quadrature, ball_quadrature

__all__ = [
    "FreeBoundary",
    "NormalizationMap",
    "BlowUpSample",
    "contact_set",
    "free_boundary",
    "matrix_sqrt_spd",
    "normalization_map",
    "identity_map",
    "rescale",
    "sample_function",
    "two_hom_extension",
    "max_admissible_radius",
    "dump_sample_csv",
]


def contact_set(sol, eps_c: float | None = None) -> np.ndarray:
    """Mask of nodes with ``u <= eps_c`` (default ``h^2``)."""
    eps = sol.eps_c if eps_c is None else eps_c
    return np.asarray(sol.u) <= eps


@dataclass(frozen=True, eq=False)
class FreeBoundary:
    points: np.ndarray       # (K, n) interface locations
    edges: np.ndarray        # (K, n+1): active node index and edge axis per point
    grid_cells: np.ndarray   # (M, n) lower-left index of cells with mixed corners

    def __len__(self):
        return len(self.points)

    def to_csv(self, path, comment: str | None = None) -> None:
        n = self.points.shape[1] if self.points.size else 2
        names = ["x", "y", "z"][:n]
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + [f"i{k}" for k in range(n)] + ["axis"])
            for p, e in zip(self.points, self.edges):
                w.writerow([repr(float(c)) for c in p] + [int(c) for c in e])


def free_boundary(sol, eps_c: float | None = None) -> FreeBoundary:
    """Interface points on edges joining an active and an inactive interior node.

    Along such an edge ``sqrt(u)`` is close to linear (quadratic detachment),
    so the zero of the line through ``sqrt(u_a)`` and ``sqrt(u_b)`` is taken.
    Roots more than two cells behind the active node are discarded.  Points
    found from both sides of a singular interface coincide and are merged.
    """
    grid = sol.grid
    act = contact_set(sol, eps_c)
    inner = grid.interior_mask()
    root = np.sqrt(np.maximum(np.asarray(sol.u), 0.0))
    pts, edges = [], []
    for ax in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        both = inner[lo] & inner[hi]
        for a_first in (True, False):
            mask = both & (act[lo] == a_first) & (act[hi] != a_first)
            idx = np.argwhere(mask)
            if not idx.size:
                continue
            step = np.zeros(grid.dim, dtype=int)
            step[ax] = 1
            ia = idx if a_first else idx + step
            ib = idx + step if a_first else idx
            sa = root[tuple(ia.T)]
            sb = root[tuple(ib.T)]
            denom = sb - sa
            tau = np.where(denom > 0, -sa / np.where(denom > 0, denom, 1.0), -np.inf)
            # roots more than two cells behind the active node come from edges
            # nearly tangent to the interface; transversal edges cover them
            ok = tau >= -2.0
            ia, ib, tau = ia[ok], ib[ok], tau[ok]
            if not ia.size:
                continue
            direction = (ib - ia)[:, ax].astype(float)
            x = grid.lower + grid.h * ia.astype(float)
            x[:, ax] += tau * grid.h * direction
            pts.append(x)
            edges.append(np.column_stack([ia, np.full(len(ia), ax)]))
    if pts:
        P = np.concatenate(pts)
        E = np.concatenate(edges)
        key = np.round(P / (1e-6 * grid.h)).astype(np.int64)
        _, first = np.unique(key, axis=0, return_index=True)
        P, E = P[first], E[first]
        order = np.lexsort(P.T[::-1])
        P, E = P[order], E[order]
    else:
        P = np.zeros((0, grid.dim))
        E = np.zeros((0, grid.dim + 1), dtype=int)
    # cells with mixed corner status, all corners interior
    corners = [act[tuple(slice(c, act.shape[k] - 1 + c) for k, c in enumerate(corner))]
               for corner in np.ndindex(*(2,) * grid.dim)]
    inner_c = np.logical_and.reduce(
        [inner[tuple(slice(c, inner.shape[k] - 1 + c) for k, c in enumerate(corner))]
         for corner in np.ndindex(*(2,) * grid.dim)])
    mixed = np.logical_or.reduce(corners) & ~np.logical_and.reduce(corners) & inner_c
    return FreeBoundary(points=P, edges=E, grid_cells=np.argwhere(mixed))


def matrix_sqrt_spd(M) -> np.ndarray:
    """Symmetric positive definite square root by eigendecomposition."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("expected a square matrix")
    scale = max(float(np.max(np.abs(M))), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise ValidationError("matrix is not symmetric")
    ev, V = np.linalg.eigh(0.5 * (M + M.T))
    if ev[0] <= 0:
        raise ValidationError(f"matrix is not positive definite (min eigenvalue {ev[0]:.3g})")
    S = (V * np.sqrt(ev)) @ V.T
    return 0.5 * (S + S.T)


@dataclass(frozen=True, eq=False)
class NormalizationMap:
    """``x -> x0 + L x`` with ``L = f(x0)^(-1/2) A(x0)^(1/2)``."""

    x0: np.ndarray
    L: np.ndarray
    L_inv: np.ndarray
    A0_inv_sqrt: np.ndarray
    f0: float
    field: CoefficientField | None

    def to_physical(self, y) -> np.ndarray:
        return self.x0 + np.asarray(y, dtype=float) @ self.L.T

    def C_field(self, y) -> np.ndarray:
        A = self.field.A(self.to_physical(y))
        return self.A0_inv_sqrt @ A @ self.A0_inv_sqrt

    def f_norm(self, y) -> np.ndarray:
        return self.field.f(self.to_physical(y)) / self.f0

    @property
    def sigma_min(self) -> float:
        return float(np.linalg.svd(self.L, compute_uv=False)[-1])

    @property
    def norm(self) -> float:
        return float(np.linalg.svd(self.L, compute_uv=False)[0])

    def modulus_bar(self) -> ModulusDescriptor:
        """Transformed modulus: ``(n lam)^2 w_A(k t) + w_f(k t)/c0``, ``k = sqrt(n lam / c0)``."""
        F = self.field
        if F is None:
            return HolderModulus(1.0, 0.0)
        n, lam, c0 = F.dim, F.lam, F.c0
        k = math.sqrt(n * lam / c0)
        return SumModulus((ScaledModulus(F.modulus_A, (n * lam) ** 2, k),
                           ScaledModulus(F.modulus_f, 1.0 / c0, k)))


def normalization_map(field: CoefficientField, x0) -> NormalizationMap:
    x0 = np.asarray(x0, dtype=float)
    A0 = np.asarray(field.A(x0), dtype=float)
    f0 = float(field.f(x0))
    S = matrix_sqrt_spd(A0)
    L = S / math.sqrt(f0)
    Sinv = matrix_sqrt_spd(np.linalg.inv(A0))
    return NormalizationMap(x0=x0, L=L, L_inv=np.linalg.inv(L), A0_inv_sqrt=Sinv, f0=f0, field=field)


def identity_map(x0, dim: int = 2) -> NormalizationMap:
    """Plain rescaling (no change of variables)."""
    I = np.eye(dim)
    return NormalizationMap(x0=np.asarray(x0, dtype=float), L=I, L_inv=I, A0_inv_sqrt=I, f0=1.0, field=None)


@dataclass(frozen=True, eq=False)
class BlowUpSample:
    """Values of ``u_{x0,r}`` (optionally normalized) on the quadrature of ``B_R``."""

    x0: np.ndarray
    r: float
    normalized: bool
    quad: Quadrature
    u_ball: np.ndarray
    grad_ball: np.ndarray
    u_sphere: np.ndarray
    grad_sphere: np.ndarray
    trusted: bool = True
    R: float = 1.0

    @property
    def dim(self) -> int:
        return self.quad.dim

    @property
    def sphere_nodes(self) -> np.ndarray:
        return self.R * self.quad.sphere_nodes

    @property
    def sphere_weights(self) -> np.ndarray:
        return self.R ** (self.dim - 1) * self.quad.sphere_weights

    @property
    def ball_nodes(self) -> np.ndarray:
        return self.R * self.quad.ball_nodes

    @property
    def ball_weights(self) -> np.ndarray:
        return self.R**self.dim * self.quad.ball_weights

    # short aliases for the sample arrays
    @property
    def u_vals(self) -> np.ndarray:
        return self.u_ball

    @property
    def grad_vals(self) -> np.ndarray:
        return self.grad_ball


def max_admissible_radius(grid, x0, L=None, margin: float | None = None) -> float:
    """Largest ``r`` with ``x0 + r L B_1`` at least ``margin`` (default one cell) inside the grid."""
    L = np.eye(grid.dim) if L is None else np.asarray(L)
    margin = grid.h if margin is None else margin
    # support function of the ellipse L B_1 in coordinate direction k is |row_k(L)|
    reach = np.linalg.norm(L, axis=1)
    x0 = np.asarray(x0, dtype=float)
    room = np.minimum(x0 - grid.lower, grid.upper - x0) - margin
    return float(max(np.min(room / reach), 0.0))


def _sample(values_at, grads_at, x0, r, L, quad, normalized, trusted, R, joint=None):
    ball = x0 + r * (R * quad.ball_nodes) @ L.T
    sph = x0 + r * (R * quad.sphere_nodes) @ L.T
    if joint is not None:
        vb, vs = joint(ball), joint(sph)
        ub, gb, us, gs = vb[:, 0], vb[:, 1:], vs[:, 0], vs[:, 1:]
    else:
        ub, gb, us, gs = values_at(ball), grads_at(ball), values_at(sph), grads_at(sph)
    return BlowUpSample(x0=np.asarray(x0, dtype=float), r=float(r), normalized=normalized, quad=quad,
                        u_ball=ub / r**2, grad_ball=gb @ L / r, u_sphere=us / r**2, grad_sphere=gs @ L / r,
                        trusted=trusted, R=R)


def rescale(sol, x0, r: float, map: NormalizationMap | None = None, quad: Quadrature | None = None,
            R: float = 1.0, rmin_factor: float = 8.0) -> BlowUpSample:
    """``u(x0 + r L y) / r^2`` and its gradient ``L^T grad u(x0 + r L y) / r`` for ``|y| <= R``."""
    grid = sol.grid
    quad = quad or ball_quadrature(grid.dim)
    x0 = np.asarray(x0, dtype=float)
    L = np.eye(grid.dim) if map is None else map.L
    rmax = max_admissible_radius(grid, x0, L) / R
    if r > rmax * (1 + 1e-12):
        raise DomainError(f"blow-up sample leaves the grid: r={r:.6g} exceeds the maximal admissible r={rmax:.6g}")
    smin = float(np.linalg.svd(L, compute_uv=False)[-1])
    trusted = r >= rmin_factor * grid.h / smin * (1 - 1e-12)
    return _sample(None, None, x0, r, L, quad, map is not None and map.field is not None, trusted, R,
                   joint=sol.interpolate_joint)


def sample_function(u: Callable, grad: Callable, x0, r: float, L=None, quad: Quadrature | None = None,
                    R: float = 1.0, dim: int = 2) -> BlowUpSample:
    """Blow-up sample of an analytic function (no grid involved)."""
    quad = quad or ball_quadrature(dim)
    L = np.eye(quad.dim) if L is None else np.asarray(L, dtype=float)
    return _sample(u, grad, np.asarray(x0, dtype=float), r, L, quad, False, True, R)


def two_hom_extension(sample: BlowUpSample) -> BlowUpSample:
    """Ball values of ``w(x) = |x|^2 u_r(x/|x|)`` from the sphere trace alone.

    ``grad w = 2|x| u(s) s + |x| grad_tau u(s)`` with ``s = x/|x|`` and
    ``grad_tau`` the tangential part of the sampled gradient.
    """
    if sample.R != 1.0:
        raise ValidationError("two-homogeneous extension expects a unit-ball sample")
    q = sample.quad
    s = q.sphere_nodes
    us = sample.u_sphere
    gs = sample.grad_sphere
    gtau = gs - np.sum(gs * s, axis=-1, keepdims=True) * s
    rho = q.radii[:, None]
    wb = (rho**2 * us[None, :]).reshape(-1)
    gb = (rho[..., None] * (2.0 * us[:, None] * s + gtau)[None, :, :]).reshape(-1, q.dim)
    return replace(sample, u_ball=wb, grad_ball=gb, grad_sphere=2.0 * us[:, None] * s + gtau)


def dump_sample_csv(sample: BlowUpSample, path) -> None:
    """Debug dump: one row per node (kind, node coordinates, weight, u, gradient)."""
    n = sample.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind"] + [f"x{k}" for k in range(n)] + ["weight", "u"] + [f"g{k}" for k in range(n)])
        for kind, X, W, U, G in (("ball", sample.ball_nodes, sample.ball_weights, sample.u_ball, sample.grad_ball),
                                 ("sphere", sample.sphere_nodes, sample.sphere_weights, sample.u_sphere,
                                  sample.grad_sphere)):
            for k in range(len(W)):
                w.writerow([kind] + [repr(float(c)) for c in X[k]] + [repr(float(W[k])), repr(float(U[k]))]
                           + [repr(float(c)) for c in G[k]])
