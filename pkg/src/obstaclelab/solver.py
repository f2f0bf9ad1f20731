"""Discrete zero-obstacle problem on a uniform 2D grid.

We minimize the discrete analogue of ``int <A grad v, grad v> + 2 f v`` over
``v >= 0`` with Dirichlet data.  The quadratic form is

    Q(u) = sum_xfaces a11_face (D u)^2 / h^2 + sum_yfaces a22_face (D u)^2 / h^2
           + sum_cells 2 a12_cell Dx u Dy u,

with face coefficients averaged from the two endpoints and ``a12_cell`` the
mean of the four corners; ``Dx u``, ``Dy u`` are the cell-centred differences.
``M`` is half the Hessian of ``Q``, so ``M u = -div_h(A grad u)`` and the
discrete energy is ``h^2 (Q(u) + 2 sum f u)``.  The KKT conditions read

    u >= 0,   zeta := f + M u >= 0,   u * zeta = 0   (interior nodes),

and ``zeta`` is the discrete version of ``f - div(A grad u)``.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .coeffs import CoefficientField, DomainError, ValidationError
from .grid import Grid
from .quadrature import ball_quadrature

__all__ = [
    "SolverOptions",
    "ResidualReport",
    "GridSolution",
    "DiscreteOperator",
    "discretize_operator",
    "reduce_obstacle",
    "solve_obstacle",
    "compute_zeta",
    "caccioppoli_check",
    "C_CAL",
]

log = logging.getLogger(__name__)

# Caccioppoli constant: twice the largest ratio observed on the benchmark
# suite (0.1366, half-space at h = 1/64), rounded up; frozen here and
# re-checked by tests/test_solver.py.
C_CAL = 0.28


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8             # relative to ||f||_inf
    max_sweeps: int = 100_000
    omega: float = 1.5
    coarse_tol: float = 1e-3      # PSOR phase target before the active-set polish
    coarse_sweeps: int = 2000
    polish: bool = True
    polish_iterations: int = 50
    check_every: int = 10
    eps_c: float | None = None    # contact threshold, default h^2

    def __post_init__(self):
        if not 0 < self.omega < 2:
            raise ValidationError("relaxation factor must lie in (0, 2)")
        if self.tol <= 0 or self.max_sweeps < 1:
            raise ValidationError("need tol > 0 and max_sweeps >= 1")


@dataclass
class ResidualReport:
    """KKT diagnostics; all residuals are absolute, ``tol`` included."""

    converged: bool
    tol: float
    complementarity: float
    stationarity: float
    feasibility: float
    zeta_min_active: float
    zeta_minus_f_max_active: float
    zeta_abs_max_inactive: float
    sweeps: int
    polish_iterations: int
    energy: float
    energy_monotone: bool
    m_matrix: bool
    f_min: float
    f_sup: float
    c0: float
    backend: str
    message: str = ""
    energy_history: list = dc_field(default_factory=list, repr=False)

    def to_dict(self, history: bool = False) -> dict:
        d = asdict(self)
        if not history:
            d.pop("energy_history")
        return d


class DiscreteOperator:
    """Nine-point flux-form operator ``M = -div_h(A grad .)``.

    ``stencil[i, j, a, b]`` multiplies ``u[i+a-1, j+b-1]`` in row ``(i, j)``;
    only interior rows are meaningful.
    """

    def __init__(self, grid: Grid, A_nodes: np.ndarray):
        if grid.dim != 2:
            raise ValidationError("the grid solver is implemented for n = 2")
        self.grid = grid
        h2 = grid.h**2
        a11, a22 = A_nodes[..., 0, 0], A_nodes[..., 1, 1]
        a12 = 0.5 * (A_nodes[..., 0, 1] + A_nodes[..., 1, 0])
        self.ax = 0.5 * (a11[:-1, :] + a11[1:, :]) / h2      # x-faces, (nx-1, ny)
        self.ay = 0.5 * (a22[:, :-1] + a22[:, 1:]) / h2      # y-faces, (nx, ny-1)
        self.wc = 0.25 * (a12[:-1, :-1] + a12[1:, :-1] + a12[:-1, 1:] + a12[1:, 1:]) / (2 * h2)
        st = np.zeros(grid.shape + (3, 3))
        ax, ay, w = self.ax, self.ay, self.wc
        st[:-1, :, 1, 1] += ax
        st[1:, :, 1, 1] += ax
        st[:-1, :, 2, 1] -= ax
        st[1:, :, 0, 1] -= ax
        st[:, :-1, 1, 1] += ay
        st[:, 1:, 1, 1] += ay
        st[:, :-1, 1, 2] -= ay
        st[:, 1:, 1, 0] -= ay
        # w [(u11-u00)^2 - (u10-u01)^2] per cell
        st[:-1, :-1, 1, 1] += w
        st[1:, 1:, 1, 1] += w
        st[1:, :-1, 1, 1] -= w
        st[:-1, 1:, 1, 1] -= w
        st[:-1, :-1, 2, 2] -= w
        st[1:, 1:, 0, 0] -= w
        st[1:, :-1, 0, 2] += w
        st[:-1, 1:, 2, 0] += w
        self.stencil = st
        inner = st[1:-1, 1:-1].reshape(-1, 9)
        off = np.delete(inner, 4, axis=1)
        self.m_matrix = bool(np.all(off <= 1e-14 * np.max(np.abs(inner[:, 4]))))
        if np.any(inner[:, 4] <= 0):
            raise ValidationError("non-positive diagonal in the assembled operator")

    @property
    def flat_stencil(self) -> np.ndarray:
        return np.ascontiguousarray(self.stencil.reshape(self.grid.shape + (9,)))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``M u`` on interior nodes, zero on the boundary."""
        out = np.zeros_like(u, dtype=float)
        nx, ny = u.shape
        acc = np.zeros((nx - 2, ny - 2))
        for a in range(3):
            for b in range(3):
                acc += self.stencil[1:-1, 1:-1, a, b] * u[a:nx - 2 + a, b:ny - 2 + b]
        out[1:-1, 1:-1] = acc
        return out

    def quadratic_form(self, u: np.ndarray) -> float:
        dx = np.diff(u, axis=0)
        dy = np.diff(u, axis=1)
        p = u[1:, 1:] - u[:-1, :-1]
        q = u[1:, :-1] - u[:-1, 1:]
        return float(np.sum(self.ax * dx**2) + np.sum(self.ay * dy**2) + np.sum(self.wc * (p**2 - q**2)))

    def energy(self, u: np.ndarray, f: np.ndarray) -> float:
        """``h^2 (Q(u) + 2 sum_interior f u)``."""
        return self.grid.h**2 * (self.quadratic_form(u) + 2.0 * float(np.sum(f[1:-1, 1:-1] * u[1:-1, 1:-1])))

    def sparse(self) -> sp.csr_matrix:
        """Rows of ``M`` for interior nodes as a sparse matrix on all nodes."""
        nx, ny = self.grid.shape
        idx = np.arange(nx * ny).reshape(nx, ny)
        rows, cols, vals = [], [], []
        r = idx[1:-1, 1:-1].ravel()
        for a in range(3):
            for b in range(3):
                v = self.stencil[1:-1, 1:-1, a, b].ravel()
                c = idx[a:nx - 2 + a, b:ny - 2 + b].ravel()
                keep = v != 0
                rows.append(r[keep])
                cols.append(c[keep])
                vals.append(v[keep])
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(nx * ny, nx * ny))


def discretize_operator(grid: Grid, field: CoefficientField):
    """Return ``(operator, load)``; the load is nodal ``f`` times ``h^n``."""
    pts = grid.points()
    op = DiscreteOperator(grid, field.A(pts))
    if not op.m_matrix:
        log.warning("assembled operator is not an M-matrix; discrete comparison principle not guaranteed")
    return op, field.f(pts) * grid.h**grid.dim


def _eval_on_grid(grid: Grid, data) -> np.ndarray:
    if callable(data):
        return np.asarray(data(grid.points()), dtype=float) * np.ones(grid.shape)
    if np.isscalar(data):
        return np.full(grid.shape, float(data))
    arr = np.asarray(data, dtype=float)
    if arr.shape != grid.shape:
        raise ValidationError(f"grid data of shape {arr.shape}, expected {grid.shape}")
    return arr.copy()


def reduce_obstacle(field: CoefficientField, h_fn, psi, grid: Grid) -> np.ndarray:
    """Nodal ``f = h - div_h(A grad psi)``; boundary nodes get ``h`` alone."""
    op = DiscreteOperator(grid, field.A(grid.points()))
    hv = _eval_on_grid(grid, h_fn)
    pv = _eval_on_grid(grid, psi)
    f = hv + op.apply(pv)
    f[~grid.interior_mask()] = hv[~grid.interior_mask()]
    fmin = float(f[1:-1, 1:-1].min())
    if fmin <= 0:
        warnings.warn(f"reduced right-hand side has min f = {fmin:.3g} <= 0; nondegeneracy fails",
                      RuntimeWarning, stacklevel=2)
    return f


@dataclass(frozen=True, eq=False)
class GridSolution:
    grid: Grid
    u: np.ndarray
    zeta: np.ndarray
    active: np.ndarray
    kkt: ResidualReport
    field: CoefficientField
    f: np.ndarray
    eps_c: float

    @cached_property
    def gradient(self) -> np.ndarray:
        """Central-difference gradient, set to zero on ``{u <= 0}``."""
        g = self.grid.gradient(self.u)
        g[self.u <= 0.0] = 0.0
        return g

    def interpolate(self, x, which: str = "u") -> np.ndarray:
        """Bilinear interpolation of ``u``, ``zeta`` or ``f`` at points ``x``."""
        return self.grid.interpolate(getattr(self, which), x)

    def interpolate_gradient(self, x) -> np.ndarray:
        return self.grid.interpolate(self.gradient, x)

    @cached_property
    def _joint(self) -> np.ndarray:
        return np.concatenate([self.u[..., None], self.gradient], axis=-1)

    def interpolate_joint(self, x) -> np.ndarray:
        """``u`` and its gradient at ``x`` in one pass, shape ``(..., 1 + n)``."""
        return self.grid.interpolate(self._joint, x)

    @property
    def converged(self) -> bool:
        return self.kkt.converged


def _kkt(op, u, f, interior, tol, eps_c):
    zeta = f + op.apply(u)
    zeta[~interior] = 0.0
    ui, zi = u[interior], zeta[interior]
    act = ui <= eps_c
    comp = float(np.max(np.abs(np.minimum(ui, zi)))) if ui.size else 0.0
    pos = ui > eps_c
    stat = float(np.max(np.maximum(-zi[pos], 0.0), initial=0.0))
    return zeta, comp, {
        "stationarity": float(np.max(np.abs(zi[pos]), initial=0.0)) if pos.any() else 0.0,
        "feasibility": float(max(0.0, -ui.min())) if ui.size else 0.0,
        "zeta_min_active": float(zi[act].min()) if act.any() else 0.0,
        "zeta_minus_f_max_active": float((zi - f[interior])[act].max()) if act.any() else 0.0,
        "zeta_abs_max_inactive": float(np.max(np.abs(zi[pos]), initial=0.0)),
        "_signed": stat,
    }


def _polish(op, Msp, u, f, interior, fscale, max_iter):
    """Primal-dual active-set iteration started from ``u``; returns ``(u, iters, ok)``."""
    nx, ny = u.shape
    inner_idx = np.flatnonzero(interior.ravel())
    uf = u.ravel().copy()
    ff = f.ravel()
    tiny = 1e-13 * fscale
    active = uf[inner_idx] <= 0.0
    Mi = Msp[inner_idx]
    for it in range(1, max_iter + 1):
        free = inner_idx[~active]
        fixed = np.setdiff1d(np.arange(nx * ny), free, assume_unique=True)
        unew = uf.copy()
        unew[inner_idx[active]] = 0.0
        if free.size:
            Mff = Msp[free][:, free].tocsc()
            rhs = -ff[free] - Msp[free][:, fixed] @ unew[fixed]
            unew[free] = spla.spsolve(Mff, rhs)
        zeta = ff[inner_idx] + Mi @ unew
        zeta[~active] = 0.0
        new_active = np.where(active, zeta > -tiny, unew[inner_idx] < -tiny)
        uf = unew
        if np.array_equal(new_active, active):
            return np.maximum(uf, 0.0).reshape(nx, ny), it, True
        active = new_active
    return np.maximum(uf, 0.0).reshape(nx, ny), max_iter, False


def solve_obstacle(grid: Grid, field: CoefficientField, boundary, opts: SolverOptions | None = None,
                   f=None, u0=None) -> GridSolution:
    """Minimize the discrete energy over ``u >= 0`` with Dirichlet data ``boundary``.

    ``boundary`` is a callable on points, a scalar or a nodal array (only its
    boundary values are used).  ``f`` overrides the nodal right-hand side, e.g.
    with the output of :func:`reduce_obstacle`.  Projected SOR runs to a coarse
    tolerance, then a primal-dual active-set polish finishes; if the polish
    fails PSOR continues until the tolerance or the sweep cap.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    pts = grid.points()
    op = DiscreteOperator(grid, field.A(pts))
    fn = field.f(pts) if f is None else _eval_on_grid(grid, f)
    interior = grid.interior_mask()
    bvals = _eval_on_grid(grid, boundary)
    if np.any(bvals[~interior] < -1e-14):
        raise ValidationError("boundary data must be nonnegative (zero-obstacle form)")
    u = np.zeros(grid.shape) if u0 is None else np.maximum(_eval_on_grid(grid, u0), 0.0)
    u[~interior] = np.maximum(bvals[~interior], 0.0)
    u = np.ascontiguousarray(u)
    eps_c = grid.h**2 if opts.eps_c is None else opts.eps_c
    fscale = max(float(np.max(np.abs(fn[interior]))), 1e-300)
    tol = opts.tol * fscale
    stencil = op.flat_stencil
    fc = np.ascontiguousarray(fn)
    h2 = grid.h**2

    energy = op.energy(u, fn)
    history = [energy]
    monotone = True
    sweeps = 0
    comp = math.inf
    phase_target = opts.coarse_tol * fscale if opts.polish else tol
    phase_cap = min(opts.coarse_sweeps, opts.max_sweeps) if opts.polish else opts.max_sweeps

    def run_psor(target, cap):
        nonlocal energy, monotone, sweeps, comp
        while sweeps < cap:
            _, de = kernels.psor_sweep(u, stencil, fc, opts.omega)
            sweeps += 1
            de *= h2
            if de > 1e-12 * max(1.0, abs(energy)):
                monotone = False
            energy += de
            history.append(energy)
            if sweeps % opts.check_every == 0 or sweeps == cap:
                _, comp, _ = _kkt(op, u, fn, interior, tol, eps_c)
                if comp <= target:
                    return True
        return False

    reached = run_psor(phase_target, phase_cap)
    polish_iters = 0
    message = ""
    if opts.polish and sweeps < opts.max_sweeps:
        up, polish_iters, ok = _polish(op, op.sparse(), u, fn, interior, fscale, opts.polish_iterations)
        _, pcomp, _ = _kkt(op, up, fn, interior, tol, eps_c)
        e_p = op.energy(up, fn)
        if ok and pcomp <= tol and e_p <= energy + 1e-10 * max(1.0, abs(energy)):
            u[...] = up
            energy = e_p
            history.append(energy)
            comp = pcomp
        else:
            message = "active-set polish rejected; continuing projected SOR"
            run_psor(tol, opts.max_sweeps)
    elif not reached and sweeps >= opts.max_sweeps:
        message = "sweep cap reached in the projected SOR phase"

    zeta, comp, parts = _kkt(op, u, fn, interior, tol, eps_c)
    parts.pop("_signed")
    converged = comp <= tol
    if not converged and not message:
        message = "tolerance not reached"
    energy = op.energy(u, fn)
    kkt = ResidualReport(
        converged=converged, tol=tol, complementarity=comp, sweeps=sweeps,
        polish_iterations=polish_iters, energy=energy, energy_monotone=monotone,
        m_matrix=op.m_matrix, f_min=float(fn[interior].min()), f_sup=field.f_sup, c0=field.c0,
        backend=kernels.BACKEND, message=message, energy_history=history, **parts)
    log.info("solve: %s sweeps, %s polish steps, comp=%.3e, %.2fs", sweeps, polish_iters, comp,
             time.perf_counter() - t0)
    for arr in (u, zeta, fn):
        arr.setflags(write=False)
    active = u <= eps_c
    active.setflags(write=False)
    return GridSolution(grid=grid, u=u, zeta=zeta, active=active, kkt=kkt, field=field, f=fn, eps_c=eps_c)


def compute_zeta(sol: GridSolution) -> np.ndarray:
    """``zeta = f - div_h(A grad u)`` on interior nodes (zero on the boundary)."""
    op = DiscreteOperator(sol.grid, sol.field.A(sol.grid.points()))
    z = sol.f + op.apply(sol.u)
    z[~sol.grid.interior_mask()] = 0.0
    return z


def solution_from_u(grid: Grid, field: CoefficientField, u: np.ndarray, f=None,
                    tol: float = 1e-8, eps_c: float | None = None) -> GridSolution:
    """Rebuild a :class:`GridSolution` (zeta, mask, KKT report) from stored ``u``."""
    pts = grid.points()
    op = DiscreteOperator(grid, field.A(pts))
    fn = field.f(pts) if f is None else _eval_on_grid(grid, f)
    interior = grid.interior_mask()
    eps_c = grid.h**2 if eps_c is None else eps_c
    fscale = max(float(np.max(np.abs(fn[interior]))), 1e-300)
    u = np.array(u, dtype=float)
    zeta, comp, parts = _kkt(op, u, fn, interior, tol * fscale, eps_c)
    parts.pop("_signed")
    kkt = ResidualReport(
        converged=comp <= tol * fscale, tol=tol * fscale, complementarity=comp, sweeps=0,
        polish_iterations=0, energy=op.energy(u, fn), energy_monotone=True, m_matrix=op.m_matrix,
        f_min=float(fn[interior].min()), f_sup=field.f_sup, c0=field.c0, backend=kernels.BACKEND,
        message="reloaded", **parts)
    active = u <= eps_c
    for arr in (u, zeta, fn, active):
        arr.setflags(write=False)
    return GridSolution(grid=grid, u=u, zeta=zeta, active=active, kkt=kkt, field=field, f=fn, eps_c=eps_c)


def _ball_integrals(sol: GridSolution, x0, r, quad):
    x0 = np.asarray(x0, dtype=float)
    nodes = x0 + r * quad.ball_nodes
    w = quad.ball_weights * r**sol.grid.dim
    return nodes, w


def caccioppoli_check(sol: GridSolution, x0, r: float, C: float = C_CAL, quad=None) -> dict:
    """Both sides of ``int_{B_r}|grad u|^2 <= C/r^2 int_{B_2r} u^2 + C ||f||^2 r^(n+2)``."""
    quad = quad or ball_quadrature(sol.grid.dim)
    x0 = np.asarray(x0, dtype=float)
    n = sol.grid.dim
    if sol.grid.distance_to_boundary(x0) < 2 * r:
        raise DomainError(f"B_2r(x0) leaves the grid; need r <= {sol.grid.distance_to_boundary(x0) / 2:.6g}")
    nodes, w = _ball_integrals(sol, x0, r, quad)
    g = sol.interpolate_gradient(nodes)
    lhs = float(np.sum(w * np.sum(g**2, axis=-1)))
    nodes2, w2 = _ball_integrals(sol, x0, 2 * r, quad)
    u2 = float(np.sum(w2 * sol.interpolate(nodes2) ** 2))
    fsup = float(np.max(np.abs(sol.f)))
    base = u2 / r**2 + fsup**2 * r ** (n + 2)
    ratio = lhs / base if base > 0 else 0.0
    return {"lhs": lhs, "rhs": C * base, "ratio": ratio, "C": C, "pass": bool(lhs <= C * base)}
