"""Weiss energy, Monneau monitor and their Dini corrections on blow-up samples.

All energies are evaluated at the unit scale of a sample, which already
contains the rescaling ``u_r(y) = u(x0 + r L y) / r^2``:

    Phi(r) = int_{B_1} (|grad u_r|^2 + 2 u_r) - 2 int_{dB_1} u_r^2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coeffs import DomainError, ValidationError, dini_integral, iterated_dini_integral
from .geometry import (BlowUpSample, NormalizationMap, max_admissible_radius, normalization_map, rescale,
                       sample_function, two_hom_extension)
from .quadrature import Quadrature, ball_quadrature, unit_ball_volume

__all__ = [
    "ConsistencyError",
    "EnergyTrace",
    "MonneauTrace",
    "weiss_energy",
    "theta_constant",
    "halfspace_energy",
    "phi_w_sphere",
    "phi_w_ball",
    "weiss_derivative_residual",
    "radii_schedule",
    "extrapolate_phi0",
    "weiss_trace",
    "freezing_gap",
    "validate_Q",
    "monneau_trace",
    "calibrate_c_corr",
    "singular_variation_check",
]

MONO_TOL = 1e-3


class ConsistencyError(RuntimeError):
    """Two evaluations that must agree analytically do not."""


def weiss_energy(sample: BlowUpSample):
    """``(phi, bulk, boundary)`` with ``phi = bulk - 2 boundary``."""
    bulk = float(np.sum(sample.ball_weights * (np.sum(sample.grad_ball**2, axis=-1) + 2.0 * sample.u_ball)))
    boundary = float(np.sum(sample.sphere_weights * sample.u_sphere**2))
    return bulk - 2.0 * boundary, bulk, boundary


def _poly_sample(Q, n, quad):
    Q = np.asarray(Q, dtype=float)
    return sample_function(lambda x: np.einsum("...i,ij,...j->...", x, Q, x),
                           lambda x: 2.0 * x @ Q, np.zeros(n), 1.0, quad=quad)


def theta_constant(n: int, quad: Quadrature | None = None, tol: float = 1e-8) -> float:
    """``theta = int_{B_1} v`` for 2-homogeneous ``v`` with ``Delta v = 1``.

    Evaluated by quadrature for ``|x|^2/(2n)`` and ``x_1^2/2`` and compared
    with the closed form ``|B_1| / (2(n+2))``.
    """
    if n < 2:
        raise ValidationError("n must be at least 2")
    quad = quad or ball_quadrature(n)
    closed = unit_ball_volume(n) / (2 * (n + 2))
    vals = []
    for Q in (np.eye(n) / (2 * n), np.diag([0.5] + [0.0] * (n - 1))):
        s = _poly_sample(Q, n, quad)
        vals.append(float(np.sum(s.ball_weights * s.u_ball)))
        vals.append(weiss_energy(s)[0])
    if max(abs(v - closed) for v in vals) > tol:
        raise ConsistencyError(f"theta quadrature {vals} disagrees with closed form {closed}")
    return closed


def halfspace_energy(n: int, quad: Quadrature | None = None, tol: float = 1e-6) -> float:
    """Weiss energy of ``(x_1^+)^2/2`` by quadrature, checked against ``theta/2``."""
    quad = quad or ball_quadrature(n)
    s = sample_function(lambda x: 0.5 * np.maximum(x[..., 0], 0.0) ** 2,
                        lambda x: np.eye(n)[0] * np.maximum(x[..., :1], 0.0),
                        np.zeros(n), 1.0, quad=quad)
    val = weiss_energy(s)[0]
    ref = theta_constant(n, quad) / 2
    if abs(val - ref) > tol:
        raise ConsistencyError(f"half-space energy {val} differs from theta/2 = {ref}")
    return val


def phi_w_sphere(sample: BlowUpSample) -> float:
    """``Phi_w(1) = (1/(n+2)) int_{dB_1} (|grad_tau u|^2 - 2n u^2 + 2u)``."""
    n = sample.dim
    s = sample.quad.sphere_nodes
    g = sample.grad_sphere
    gtau = g - np.sum(g * s, axis=-1, keepdims=True) * s
    u = sample.u_sphere
    return float(np.sum(sample.quad.sphere_weights * (np.sum(gtau**2, axis=-1) - 2 * n * u**2 + 2 * u))) / (n + 2)


def phi_w_ball(sample: BlowUpSample) -> float:
    return weiss_energy(two_hom_extension(sample))[0]


def _phi_w(sample, tol=1e-8):
    a, b = phi_w_sphere(sample), phi_w_ball(sample)
    if abs(a - b) > tol * max(1.0, abs(a)):
        raise ConsistencyError(f"Phi_w from the sphere formula ({a}) and the ball quadrature ({b}) disagree")
    return a


def weiss_derivative_residual(u, x0, r: float, dr: float = 1e-3, grad=None, quad: Quadrature | None = None,
                              dim: int = 2, detail: bool = False):
    """``|Phi'(r) - RHS|`` with a centred difference on the left and

        RHS = (n+2)/r (Phi_w(1) - Phi_u(1)) + 1/r int_{dB_1} (d_nu u_r - 2 u_r)^2.

    ``u`` is a grid solution or a vectorized callable (then ``grad`` is required).
    """
    if callable(u):
        if grad is None:
            raise ValidationError("analytic input needs its gradient")
        quad = quad or ball_quadrature(dim)

        def sample(rad):
            return sample_function(u, grad, x0, rad, quad=quad)
    else:
        quad = quad or ball_quadrature(u.grid.dim)

        def sample(rad):
            return rescale(u, x0, rad, quad=quad)
    n = quad.dim
    lhs = (weiss_energy(sample(r + dr))[0] - weiss_energy(sample(r - dr))[0]) / (2 * dr)
    s = sample(r)
    phi_u = weiss_energy(s)[0]
    phi_w = _phi_w(s)
    dnu = np.sum(s.grad_sphere * s.quad.sphere_nodes, axis=-1)
    flux = float(np.sum(s.sphere_weights * (dnu - 2 * s.u_sphere) ** 2))
    rhs = (n + 2) / r * (phi_w - phi_u) + flux / r
    res = abs(lhs - rhs)
    if detail:
        return res, {"lhs": lhs, "rhs": rhs, "phi_u": phi_u, "phi_w": phi_w, "flux": flux}
    return res


# ---------------------------------------------------------------------------
# traces


def radii_schedule(grid, x0, map: NormalizationMap, q: float = 2**-0.5, rmin_factor: float = 8.0,
                   margin_cells: float = 2.0, r_cap: float | None = None):
    """Geometric radii ``r_max q^k >= r_min``; returns ``(radii, r_min, r_max)``."""
    if not 0 < q < 1:
        raise ValidationError("radius ratio q must lie in (0, 1)")
    r_min = rmin_factor * grid.h / map.sigma_min
    r_max = max_admissible_radius(grid, x0, map.L, margin=margin_cells * grid.h)
    if r_cap is not None:
        r_max = min(r_max, r_cap)
    radii = []
    r = r_max
    while r >= r_min * (1 - 1e-9) and len(radii) < 200:
        radii.append(r)
        r *= q
    return np.array(radii), r_min, r_max


def extrapolate_phi0(radii, phi, corr_smallest: float = 0.0, betas=None):
    """Least-squares fit ``phi ~ phi0 + c r^beta``, ``beta`` in [0.2, 2].

    Returns ``(phi0, uncertainty, beta)``; uncertainty is the largest fit
    residual plus the correction at the smallest radius.
    """
    radii = np.asarray(radii, dtype=float)
    phi = np.asarray(phi, dtype=float)
    betas = np.linspace(0.2, 2.0, 181) if betas is None else np.asarray(betas, dtype=float)
    # closed-form two-parameter least squares for every beta at once
    Z = radii[None, :] ** betas[:, None]
    zm = Z.mean(axis=1, keepdims=True)
    pm = phi.mean()
    zc = Z - zm
    c = (zc @ (phi - pm)) / np.maximum(np.sum(zc**2, axis=1), 1e-300)
    p0 = pm - c * zm[:, 0]
    res = phi[None, :] - p0[:, None] - c[:, None] * Z
    ss = np.sum(res**2, axis=1)
    k = int(np.argmin(ss))
    return float(p0[k]), float(np.max(np.abs(res[k]))) + abs(corr_smallest), float(betas[k])


def _increments(radii, values, trusted):
    m = np.asarray(trusted, dtype=bool)
    r = np.asarray(radii)[m]
    v = np.asarray(values)[m]
    order = np.argsort(r)
    return np.diff(v[order])


@dataclass
class EnergyTrace:
    x0: np.ndarray
    normalized: bool
    radii: np.ndarray
    phi: np.ndarray
    bulk: np.ndarray
    boundary: np.ndarray
    dini: np.ndarray          # int_0^r omega_bar(t)/t dt, without the constant
    C_corr: float
    trusted: np.ndarray
    r_min: float
    r_max: float
    gamma: float
    phi0_estimate: float = math.nan
    phi0_uncertainty: float = math.nan
    phi0_beta: float = math.nan
    phi0_available: bool = False
    notes: list = dc_field(default_factory=list)

    @property
    def correction(self) -> np.ndarray:
        return self.C_corr * self.dini

    @property
    def monitor(self) -> np.ndarray:
        return self.phi + self.correction

    def min_increment(self, corrected: bool = True) -> float:
        d = _increments(self.radii, self.monitor if corrected else self.phi, self.trusted)
        return float(d.min()) if d.size else math.inf

    @property
    def n_trusted(self) -> int:
        return int(np.sum(self.trusted))

    def with_c_corr(self, C: float) -> "EnergyTrace":
        t = EnergyTrace(**{**self.__dict__, "C_corr": float(C)})
        return _fit_phi0(t)

    def rows(self):
        for k in range(len(self.radii)):
            yield [self.radii[k], self.phi[k], self.bulk[k], self.boundary[k], self.correction[k],
                   self.monitor[k], int(bool(self.trusted[k]))]

    def to_csv(self, path, comment: str | None = None) -> None:
        _write_csv(path, ["r", "phi", "bulk", "boundary", "correction", "phi_plus_corr", "trusted"], self.rows(),
                   comment)

    def summary(self) -> dict:
        return {
            "x0": [float(c) for c in self.x0], "normalized": self.normalized,
            "phi0_estimate": _num(self.phi0_estimate), "uncertainty": _num(self.phi0_uncertainty),
            "phi0_available": self.phi0_available, "beta": _num(self.phi0_beta), "gamma": self.gamma,
            "C_corr": self.C_corr, "r_min": self.r_min, "r_max": self.r_max,
            "n_trusted": self.n_trusted, "min_increment": _num(self.min_increment()), "notes": list(self.notes),
        }

    def to_json(self, path) -> None:
        _write_json(path, self.summary())


def _num(v):
    return None if not np.isfinite(v) else float(v)


def _write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit_phi0(tr: EnergyTrace) -> EnergyTrace:
    m = np.asarray(tr.trusted, dtype=bool)
    if m.sum() < 4:
        tr.phi0_available = False
        tr.phi0_estimate = tr.phi0_uncertainty = tr.phi0_beta = math.nan
        if "fewer than 4 trusted radii" not in tr.notes:
            tr.notes.append("fewer than 4 trusted radii")
        return tr
    r = tr.radii[m]
    k = int(np.argmin(r))
    tr.phi0_estimate, tr.phi0_uncertainty, tr.phi0_beta = extrapolate_phi0(r, tr.phi[m], tr.correction[m][k])
    tr.phi0_available = True
    return tr


def _gamma(samples) -> float:
    g = 1.0
    for s in samples:
        u = max(float(np.max(np.abs(s.u_ball))), float(np.max(np.abs(s.u_sphere))))
        d = max(float(np.max(np.linalg.norm(s.grad_ball, axis=-1))),
                float(np.max(np.linalg.norm(s.grad_sphere, axis=-1))))
        g = max(g, u + d)
    return g


def _setup(sol, x0, map, radii, quad, q, rmin_factor, margin_cells, r_cap):
    x0 = np.asarray(x0, dtype=float)
    map = map if map is not None else normalization_map(sol.field, x0)
    quad = quad or ball_quadrature(sol.grid.dim)
    sched, r_min, r_max = radii_schedule(sol.grid, x0, map, q, rmin_factor, margin_cells, r_cap)
    if radii is None:
        radii = sched
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    return x0, map, quad, radii, r_min, r_max


def _dini_values(modulus, radii, integral):
    # a nondecreasing modulus vanishing at the largest radius vanishes below it
    if len(radii) == 0 or float(modulus(float(np.max(radii)))) == 0.0:
        return np.zeros(len(radii))
    return np.array([integral(modulus, r) for r in radii])


def weiss_trace(sol, x0, map: NormalizationMap | None = None, radii=None, C_corr: float = 0.0,
                quad: Quadrature | None = None, q: float = 2**-0.5, rmin_factor: float = 8.0,
                margin_cells: float = 2.0, r_cap: float | None = None) -> EnergyTrace:
    """Weiss energies of ``u_{L(x0), r}`` over a radius schedule, plus corrections."""
    x0, map, quad, radii, r_min, r_max = _setup(sol, x0, map, radii, quad, q, rmin_factor, margin_cells, r_cap)
    wbar = map.modulus_bar()
    rows, trusted, samples = [], [], []
    for r in radii:
        s = rescale(sol, x0, r, map, quad, rmin_factor=rmin_factor)
        rows.append(weiss_energy(s))
        trusted.append(s.trusted)
        if s.trusted:
            samples.append(s)
    rows = np.array(rows).reshape(-1, 3)
    dini = _dini_values(wbar, radii, dini_integral)
    tr = EnergyTrace(x0=x0, normalized=map.field is not None, radii=radii, phi=rows[:, 0], bulk=rows[:, 1],
                     boundary=rows[:, 2], dini=dini, C_corr=float(C_corr), trusted=np.array(trusted, dtype=bool),
                     r_min=r_min, r_max=r_max, gamma=_gamma(samples))
    return _fit_phi0(tr)


def freezing_gap(sample: BlowUpSample, map: NormalizationMap, r: float | None = None) -> dict:
    """Left sides and bounds of the coefficient-freezing estimates at scale ``r``.

    ``|int |grad u_r|^2 - <C(r y) grad u_r, grad u_r>| <= w_A(r) int |grad u_r|^2`` and
    ``|int (1 - f_norm(r y)) u_r| <= w_f(r) int u_r``, with the transformed moduli.
    """
    r = sample.r if r is None else r
    y = r * sample.ball_nodes
    w = sample.ball_weights
    g = sample.grad_ball
    u = sample.u_ball
    if map.field is None:
        C = np.broadcast_to(np.eye(sample.dim), (len(w), sample.dim, sample.dim))
        fn = np.ones(len(w))
        wa = wf = 0.0
    else:
        C = map.C_field(y)
        fn = map.f_norm(y)
        F = map.field
        k = math.sqrt(F.dim * F.lam / F.c0)
        wa = float((F.dim * F.lam) ** 2 * F.modulus_A(k * r))
        wf = float(F.modulus_f(k * r) / F.c0)
    g2 = np.sum(g**2, axis=-1)
    lhs_A = abs(float(np.sum(w * (g2 - np.einsum("ki,kij,kj->k", g, C, g)))))
    lhs_f = abs(float(np.sum(w * (1.0 - fn) * u)))
    bound_A = wa * float(np.sum(w * g2))
    bound_f = wf * float(np.sum(w * np.abs(u)))
    slack = 1e-12
    return {"lhs_A": lhs_A, "bound_A": bound_A, "lhs_f": lhs_f, "bound_f": bound_f,
            "violated": bool(lhs_A > bound_A + slack or lhs_f > bound_f + slack)}


def validate_Q(Q, n: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """Check the convention ``Q = Q^T >= 0``, ``tr Q = 1/2`` (so ``Delta <Qx,x> = 1``)."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or (n is not None and Q.shape[0] != n):
        raise ValidationError(f"Q must be a square matrix of size {n}")
    if np.max(np.abs(Q - Q.T)) > tol:
        raise ValidationError("Q must be symmetric")
    if np.linalg.eigvalsh(0.5 * (Q + Q.T))[0] < -tol:
        raise ValidationError("Q must be positive semidefinite")
    if abs(np.trace(Q) - 0.5) > tol:
        raise ValidationError(f"tr Q must be 1/2 (Delta v = 1), got {np.trace(Q)!r}")
    return 0.5 * (Q + Q.T)


@dataclass
class MonneauTrace:
    x0: np.ndarray
    Q: np.ndarray
    radii: np.ndarray
    deviation: np.ndarray
    iterated: np.ndarray      # int_0^r dt/t int_0^t omega_bar(s)/s ds, without constants
    C_corr: float
    gamma: float
    trusted: np.ndarray
    r_min: float
    r_max: float

    @property
    def correction(self) -> np.ndarray:
        return self.C_corr * self.gamma**2 * self.iterated

    @property
    def monitor(self) -> np.ndarray:
        return self.deviation + self.correction

    def min_increment(self, corrected: bool = True) -> float:
        d = _increments(self.radii, self.monitor if corrected else self.deviation, self.trusted)
        return float(d.min()) if d.size else math.inf

    def with_c_corr(self, C: float) -> "MonneauTrace":
        return MonneauTrace(**{**self.__dict__, "C_corr": float(C)})

    def rows(self):
        for k in range(len(self.radii)):
            yield [self.radii[k], self.deviation[k], self.correction[k], self.monitor[k], int(bool(self.trusted[k]))]

    def to_csv(self, path, comment: str | None = None) -> None:
        _write_csv(path, ["r", "deviation", "correction", "monitor", "trusted"], self.rows(), comment)

    def summary(self) -> dict:
        return {"x0": [float(c) for c in self.x0], "Q": self.Q.tolist(), "gamma": self.gamma, "C_corr": self.C_corr,
                "r_min": self.r_min, "r_max": self.r_max, "min_increment": _num(self.min_increment())}


def monneau_trace(sol, x0, map: NormalizationMap | None, Q, radii=None, C_corr: float = 0.0,
                  quad: Quadrature | None = None, q: float = 2**-0.5, rmin_factor: float = 8.0,
                  margin_cells: float = 2.0, r_cap: float | None = None) -> MonneauTrace:
    """``int_{dB_1} (u_r - <Q y, y>)^2`` plus ``C gamma^2`` times the iterated Dini integral."""
    x0, map, quad, radii, r_min, r_max = _setup(sol, x0, map, radii, quad, q, rmin_factor, margin_cells, r_cap)
    Q = validate_Q(Q, sol.grid.dim)
    s_nodes = quad.sphere_nodes
    v = np.einsum("ki,ij,kj->k", s_nodes, Q, s_nodes)
    wbar = map.modulus_bar()
    dev, trusted, samples = [], [], []
    for r in radii:
        s = rescale(sol, x0, r, map, quad, rmin_factor=rmin_factor)
        dev.append(float(np.sum(s.sphere_weights * (s.u_sphere - v) ** 2)))
        trusted.append(s.trusted)
        if s.trusted:
            try:
                samples.append(rescale(sol, x0, r, map, quad, R=2.0, rmin_factor=rmin_factor))
            except DomainError:
                samples.append(s)
    iterated = _dini_values(wbar, radii, iterated_dini_integral)
    return MonneauTrace(x0=x0, Q=Q, radii=radii, deviation=np.array(dev), iterated=iterated, C_corr=float(C_corr),
                        gamma=_gamma(samples), trusted=np.array(trusted, dtype=bool), r_min=r_min, r_max=r_max)


def calibrate_c_corr(traces) -> float:
    """Smallest ``C`` making every trace nondecreasing over its trusted radii.

    For a trace with raw values ``b`` and unit corrections ``c`` (increasing
    in ``r``), each pair of consecutive radii needs ``C >= -db / dc``.  The
    shipped policy uses twice the returned value.
    """
    need = 0.0
    for tr in traces:
        if isinstance(tr, MonneauTrace):
            base, unit = tr.deviation, tr.gamma**2 * tr.iterated
        else:
            base, unit = tr.phi, tr.dini
        db = _increments(tr.radii, base, tr.trusted)
        dc = _increments(tr.radii, unit, tr.trusted)
        for a, c in zip(db, dc):
            # pairs with no correction increment cannot be repaired by any C
            if a < 0 and c > 0:
                need = max(need, -a / c)
    return need


def singular_variation_check(sol, x0, r: float, quad: Quadrature | None = None) -> dict:
    """Weak form with test function 1 on ``B_r(x0)``: ``int (f - zeta) = int <A grad u, nu>``."""
    quad = quad or ball_quadrature(sol.grid.dim)
    x0 = np.asarray(x0, dtype=float)
    n = sol.grid.dim
    if sol.grid.distance_to_boundary(x0) < r + sol.grid.h:
        raise DomainError("ball leaves the grid")
    xb = x0 + r * quad.ball_nodes
    wb = quad.ball_weights * r**n
    bulk = float(np.sum(wb * (sol.interpolate(xb, "f") - sol.interpolate(xb, "zeta"))))
    xs = x0 + r * quad.sphere_nodes
    ws = quad.sphere_weights * r ** (n - 1)
    A = sol.field.A(xs)
    g = sol.interpolate_gradient(xs)
    flux = float(np.sum(ws * np.einsum("ki,kij,kj->k", quad.sphere_nodes, A, g)))
    return {"bulk": bulk, "flux": flux, "difference": abs(bulk - flux)}
