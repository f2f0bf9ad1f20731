"""Regular/singular classification of free-boundary points.

A point is Regular when the extrapolated Weiss limit is near ``theta/2`` and
Singular when it is near ``theta``; if the uncertainty interval of the
estimate covers the midpoint ``3 theta / 4`` the verdict is Undetermined.
Regular points get a half-space fit ``(<x, e>^+)^2/2``, singular points a
polynomial fit ``<Q x, x>`` with ``tr Q = 1/2`` and ``k = dim ker Q``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .coeffs import DomainError
from .energies import halfspace_energy, radii_schedule, theta_constant, weiss_trace
from .geometry import BlowUpSample, identity_map, max_admissible_radius, normalization_map, rescale
from .quadrature import ball_quadrature

__all__ = [
    "AnalysisConfig",
    "FBClassification",
    "classify_point",
    "classify_points",
    "fit_halfspace",
    "fit_polynomial_blowup",
    "nondegeneracy_check",
    "stratify",
    "classification_report",
    "write_report",
    "reference_energies",
]

_GOLD = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class AnalysisConfig:
    q: float = 2**-0.5
    rmin_factor: float = 8.0
    n_theta: int = 512
    n_rho: int = 64
    c_corr: float = 0.0
    eig_threshold: float = 1e-2       # relative to tr Q
    margin_cells: float = 2.0
    r_cap: float | None = None
    min_trusted: int = 4

    def quad(self, dim: int = 2):
        return ball_quadrature(dim, self.n_theta if dim == 2 else None, self.n_rho)


@lru_cache(maxsize=8)
def reference_energies(n: int, n_theta: int | None = None, n_rho: int = 64):
    """``(theta, theta_half)``: polynomial and half-space Weiss limits, by quadrature."""
    quad = ball_quadrature(n, n_theta, n_rho)
    return theta_constant(n, quad), halfspace_energy(n, quad)


@dataclass
class FBClassification:
    x0: np.ndarray
    verdict: str                     # "Regular", "Singular" or "Undetermined"
    k: int | None
    phi0: float
    uncertainty: float
    theta: float
    theta_half: float
    e: np.ndarray | None = None          # half-space direction, normalized coordinates
    normal: np.ndarray | None = None     # the same direction in physical coordinates
    Q: np.ndarray | None = None
    fit_residual: float = math.nan
    fit_stability: float = math.nan      # change of the fit between the two smallest trusted radii
    n_trusted: int = 0
    reason: str = ""

    @property
    def label(self) -> str:
        return f"Singular({self.k})" if self.verdict == "Singular" else self.verdict

    def to_record(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return {
            "x0": arr(self.x0), "verdict": self.label, "k": self.k, "phi0": num(self.phi0),
            "uncertainty": num(self.uncertainty), "theta": self.theta, "theta_half": self.theta_half,
            "e": arr(self.e), "normal": arr(self.normal), "Q": arr(self.Q),
            "fit_residual": num(self.fit_residual), "fit_stability": num(self.fit_stability),
            "n_trusted": self.n_trusted, "reason": self.reason,
        }


# ---------------------------------------------------------------------------
# blow-up fits


def _halfspace_misfit(sample: BlowUpSample, E: np.ndarray) -> np.ndarray:
    """Weighted squared misfit on the unit sphere for each row of ``E``."""
    s = sample.quad.sphere_nodes
    model = 0.5 * np.maximum(E @ s.T, 0.0) ** 2
    return (model - sample.u_sphere) ** 2 @ sample.quad.sphere_weights


def _golden(fn, a, b, tol=1e-12):
    c, d = b - _GOLD * (b - a), a + _GOLD * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _unit(angles):
    angles = np.atleast_1d(angles)
    if angles.shape[-1] == 1:
        return np.stack([np.cos(angles[..., 0]), np.sin(angles[..., 0])], axis=-1)
    th, ph = angles[..., 0], angles[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


def fit_halfspace(sample: BlowUpSample, n_grid: int = 720):
    """Best ``e`` for ``(<x, e>^+)^2/2`` on the sphere; returns ``(e, rms_residual)``.

    Exhaustive search over an angular grid followed by golden-section
    refinement (coordinate-wise in 3D).
    """
    n = sample.dim
    area = float(np.sum(sample.quad.sphere_weights))
    if n == 2:
        th = 2 * np.pi * np.arange(n_grid) / n_grid
        J = _halfspace_misfit(sample, _unit(th[:, None]))
        t0 = th[int(np.argmin(J))]
        step = 2 * np.pi / n_grid

        def obj(t):
            return float(_halfspace_misfit(sample, _unit(np.array([[t]])))[0])
        t = _golden(obj, t0 - step, t0 + step)
        e = np.array([math.cos(t), math.sin(t)])
    elif n == 3:
        m = int(math.sqrt(n_grid * 4))
        k = np.arange(m)
        pol = np.arccos(1 - 2 * (k + 0.5) / m)
        az = np.pi * (1 + 5**0.5) * k
        ang = np.stack([pol, az], axis=-1)
        J = _halfspace_misfit(sample, _unit(ang))
        best = ang[int(np.argmin(J))].copy()
        step = 4.0 / math.sqrt(m)
        for _ in range(4):
            for c in range(2):
                def obj(t, c=c):
                    a = best.copy()
                    a[c] = t
                    return float(_halfspace_misfit(sample, _unit(a[None, :]))[0])
                best[c] = _golden(obj, best[c] - step, best[c] + step)
            step /= 4
        e = _unit(best[None, :])[0]
    else:
        raise ValueError("half-space fit implemented for n = 2, 3")
    res = math.sqrt(max(float(_halfspace_misfit(sample, e[None, :])[0]), 0.0) / area)
    return e, res


def fit_polynomial_blowup(sample: BlowUpSample, eig_threshold: float = 1e-2):
    """Least-squares ``<Q x, x>`` on the sphere, projected to ``Q >= 0``, ``tr Q = 1/2``.

    Returns ``(Q, rms_residual, k)`` with ``k`` the number of eigenvalues below
    ``eig_threshold * tr Q``.
    """
    n = sample.dim
    s = sample.quad.sphere_nodes
    w = sample.quad.sphere_weights
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    X = np.column_stack([s[:, i] * s[:, j] * (1.0 if i == j else 2.0) for i, j in pairs])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], sample.u_sphere * sw, rcond=None)
    Q = np.zeros((n, n))
    for c, (i, j) in zip(coef, pairs):
        Q[i, j] = Q[j, i] = c
    ev, V = np.linalg.eigh(Q)
    ev = np.clip(ev, 0.0, None)
    if ev.sum() <= 0:
        ev = np.full(n, 1.0 / (2 * n))
    ev *= 0.5 / ev.sum()
    Q = (V * ev) @ V.T
    Q = 0.5 * (Q + Q.T)
    model = np.einsum("ki,ij,kj->k", s, Q, s)
    res = math.sqrt(float(np.sum(w * (model - sample.u_sphere) ** 2)) / float(np.sum(w)))
    k = int(np.sum(ev < eig_threshold * 0.5))
    return Q, res, k


# ---------------------------------------------------------------------------
# point classification


def classify_point(sol, x0, cfg: AnalysisConfig | None = None) -> FBClassification:
    cfg = cfg or AnalysisConfig()
    n = sol.grid.dim
    x0 = np.asarray(x0, dtype=float)
    theta, theta_half = reference_energies(n, cfg.n_theta if n == 2 else None, cfg.n_rho)
    quad = cfg.quad(n)
    map_ = normalization_map(sol.field, x0)
    base = dict(x0=x0, theta=theta, theta_half=theta_half)
    r_min = cfg.rmin_factor * sol.grid.h / map_.sigma_min
    reach = max_admissible_radius(sol.grid, x0, map_.L, margin=0.0)
    if reach < 4 * r_min:
        return FBClassification(verdict="Undetermined", k=None, phi0=math.nan, uncertainty=math.nan,
                                reason=f"too close to the domain boundary: r_max={reach:.4g} < 4 r_min={4 * r_min:.4g}",
                                **base)
    try:
        tr = weiss_trace(sol, x0, map_, C_corr=cfg.c_corr, quad=quad, q=cfg.q, rmin_factor=cfg.rmin_factor,
                         margin_cells=cfg.margin_cells, r_cap=cfg.r_cap)
    except DomainError as exc:
        return FBClassification(verdict="Undetermined", k=None, phi0=math.nan, uncertainty=math.nan,
                                reason=str(exc), **base)
    if tr.n_trusted < cfg.min_trusted or not tr.phi0_available:
        return FBClassification(verdict="Undetermined", k=None, phi0=math.nan, uncertainty=math.nan,
                                n_trusted=tr.n_trusted, reason="too close to the domain boundary: "
                                f"{tr.n_trusted} trusted radii (r_max={tr.r_max:.4g}, r_min={tr.r_min:.4g})",
                                **base)
    phi0, unc = tr.phi0_estimate, tr.phi0_uncertainty
    mid = 0.5 * (theta + theta_half)
    out = FBClassification(verdict="Undetermined", k=None, phi0=phi0, uncertainty=unc, n_trusted=tr.n_trusted,
                           **base)
    if abs(phi0 - mid) <= unc:
        out.reason = "uncertainty interval contains the decision midpoint"
        return out
    small = np.sort(tr.radii[tr.trusted])[:2]
    samples = [rescale(sol, x0, r, map_, quad, rmin_factor=cfg.rmin_factor) for r in small]
    if abs(phi0 - theta_half) < abs(phi0 - theta):
        fits = [fit_halfspace(s) for s in samples]
        e, res = fits[0]
        out.verdict = "Regular"
        out.e = e
        nrm = map_.L_inv.T @ e
        out.normal = nrm / np.linalg.norm(nrm)
        out.fit_residual = res
        if len(fits) > 1:
            out.fit_stability = float(np.linalg.norm(fits[1][0] - e))
    else:
        fits = [fit_polynomial_blowup(s, cfg.eig_threshold) for s in samples]
        Q, res, k = fits[0]
        out.verdict = "Singular"
        out.Q, out.k, out.fit_residual = Q, k, res
        if len(fits) > 1:
            out.fit_stability = float(np.max(np.abs(fits[1][0] - Q)))
    return out


def classify_points(sol, points, cfg: AnalysisConfig | None = None, workers: int = 1) -> list:
    """Classify several points; ``workers > 1`` uses a thread pool (order preserved)."""
    pts = [np.asarray(p, dtype=float) for p in points]
    if workers <= 1 or len(pts) < 2:
        return [classify_point(sol, p, cfg) for p in pts]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda p: classify_point(sol, p, cfg), pts))


@dataclass
class NondegeneracyReport:
    theta_hat: float
    gamma_hat: float
    per_point: list = dc_field(default_factory=list)   # (x0, min over r of sup_dB1 u_r)


def nondegeneracy_check(sol, points, radii=None, r_hi: float = 0.2, cfg: AnalysisConfig | None = None):
    """``min`` over points and radii of ``sup_{dB_1} u_{x0,r}`` and the growth bound on ``B_2``.

    Default radii: trusted radii of the plain (unnormalized) schedule in ``[r_min, r_hi]``.
    """
    cfg = cfg or AnalysisConfig()
    quad = cfg.quad(sol.grid.dim)
    theta_hat, gamma_hat = math.inf, 0.0
    per = []
    for p in points:
        p = np.asarray(p, dtype=float)
        imap = identity_map(p, sol.grid.dim)
        if radii is None:
            rr, r_min, _ = radii_schedule(sol.grid, p, imap, cfg.q, cfg.rmin_factor, cfg.margin_cells)
            rr = rr[(rr <= r_hi * (1 + 1e-12)) & (rr >= r_min * (1 - 1e-9))]
        else:
            rr = np.asarray(radii, dtype=float)
        best = math.inf
        for r in rr:
            s = rescale(sol, p, r, None, quad, rmin_factor=cfg.rmin_factor)
            best = min(best, float(np.max(s.u_sphere)))
            try:
                s2 = rescale(sol, p, r, None, quad, R=2.0, rmin_factor=cfg.rmin_factor)
                gamma_hat = max(gamma_hat, float(np.max(np.abs(s2.u_ball))), float(np.max(np.abs(s2.u_sphere))))
            except DomainError:
                pass
        if np.isfinite(best):
            per.append((p.tolist(), best))
            theta_hat = min(theta_hat, best)
    return NondegeneracyReport(theta_hat=theta_hat, gamma_hat=gamma_hat, per_point=per)


# ---------------------------------------------------------------------------
# stratification and reports


def stratify(classifications, link: float | None = None) -> dict:
    """Group verdicts into Reg / S_k / Undetermined; optional coherence per component.

    Points closer than ``link`` belong to the same interface component; a
    component is coherent when all its determined verdicts coincide.
    """
    cls = list(classifications)
    reg = [c for c in cls if c.verdict == "Regular"]
    und = [c for c in cls if c.verdict == "Undetermined"]
    strata: dict = {}
    for c in cls:
        if c.verdict == "Singular":
            strata.setdefault(int(c.k), []).append(c)
    rep = {
        "n_points": len(cls),
        "n_regular": len(reg),
        "n_singular": sum(len(v) for v in strata.values()),
        "n_undetermined": len(und),
        "strata": {str(k): len(v) for k, v in sorted(strata.items())},
        "regular": [c.x0.tolist() for c in reg],
        "singular": {str(k): [c.x0.tolist() for c in v] for k, v in sorted(strata.items())},
        "undetermined": [c.x0.tolist() for c in und],
        "components": None,
        "coherent": None,
    }
    if link is not None and cls:
        X = np.array([c.x0 for c in cls])
        pairs = np.array(sorted(cKDTree(X).query_pairs(link)), dtype=int).reshape(-1, 2)
        G = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(cls), len(cls)))
        ncomp, lab = connected_components(G, directed=False)
        comps = []
        coherent = True
        for c in range(ncomp):
            labels = sorted({cls[i].label for i in np.flatnonzero(lab == c) if cls[i].verdict != "Undetermined"})
            comps.append({"size": int(np.sum(lab == c)), "verdicts": labels})
            coherent &= len(labels) <= 1
        rep["components"] = comps
        rep["coherent"] = bool(coherent)
    return rep


def classification_report(classifications, meta: dict | None = None, link: float | None = None) -> dict:
    cls = list(classifications)
    return {"meta": dict(meta or {}), "points": [c.to_record() for c in cls], "summary": stratify(cls, link)}


_CSV_COLUMNS = ["x", "y", "verdict", "k", "phi0", "uncertainty", "fit_residual", "e1", "e2",
                "q11", "q12", "q22", "reason"]


def write_report(report: dict, json_path=None, csv_path=None, comment: str | None = None) -> None:
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_CSV_COLUMNS)
            for p in report["points"]:
                e = p["e"] or [None, None]
                Q = p["Q"] or [[None, None], [None, None]]
                row = [p["x0"][0], p["x0"][1], p["verdict"], p["k"], p["phi0"], p["uncertainty"],
                       p["fit_residual"], e[0], e[1], Q[0][0], Q[0][1], Q[1][1], p["reason"]]
                w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
