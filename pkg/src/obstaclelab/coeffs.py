"""Coefficient fields (A, f), moduli of continuity and Dini-type integrals.

A field is an immutable bundle of two vectorized callables, the matrix field
``A`` and the scalar field ``f``, together with the structural constants the
analysis needs: the two-sided ellipticity constant ``lam``, a strict lower
bound ``c0`` for ``f``, the sup norm ``f_sup`` and one modulus of continuity
for each of ``A`` and ``f``.

Moduli are stored as analytic objects whenever possible.  Every modulus can
be evaluated in the logarithmic variable ``s = -log t`` (``log_eval``), which
is what the Dini integrals use: the integrals below are computed in ``s`` so
that the singular end ``t -> 0`` becomes an infinite tail that can be
extrapolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "DomainError",
    "ValidationError",
    "ModulusDescriptor",
    "HolderModulus",
    "PowerLogModulus",
    "TabulatedModulus",
    "CustomModulus",
    "ScaledModulus",
    "SumModulus",
    "CoefficientField",
    "eval_matrix",
    "eval_scalar",
    "dini_integral",
    "iterated_dini_integral",
    "dini_class_consistent",
    "make_test_family",
    "modulus_estimate",
    "validate_field",
    "save_tabulated",
    "load_tabulated",
    "EPS_CUT",
]

EPS_CUT = 1e-12
# number of log-doublings of the cutoff used for the tail extrapolation
_TAIL_LEVELS = 6
_DIVERGENCE_RATIO = 0.9


class DomainError(ValueError):
    """A point lies outside the closed domain box."""


class ValidationError(ValueError):
    """Inconsistent parameters or data."""


# ---------------------------------------------------------------------------
# moduli of continuity


class ModulusDescriptor:
    """Nondecreasing modulus of continuity ``omega`` with ``omega(0+) = 0``.

    Subclasses implement :meth:`log_eval`, the modulus evaluated at
    ``t = exp(-s)``.  Calling the object evaluates it at ``t``.
    """

    kind = "abstract"

    def log_eval(self, s):
        raise NotImplementedError

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            s = -np.log(t)
        return self.log_eval(s)

    @property
    def dini_class(self) -> str:
        return "none"

    def is_double_dini(self, a: int) -> bool:
        cls = self.dini_class
        if cls == "hoelder":
            return True
        if cls.startswith("double_dini("):
            return a <= int(cls[len("double_dini("):-1])
        return a == 0 and cls == "dini"

    def is_dini(self) -> bool:
        return self.dini_class != "none"

    def knots(self) -> list[float]:
        """Points in ``s`` where the integrand may have a kink."""
        return []


def _max_class(classes):
    # weakest regularity among summands
    if "none" in classes:
        return "none"
    if "dini" in classes:
        return "dini"
    orders = [int(c[len("double_dini("):-1]) for c in classes if c.startswith("double_dini(")]
    if orders:
        return f"double_dini({min(orders)})"
    return "hoelder"


@dataclass(frozen=True)
class HolderModulus(ModulusDescriptor):
    """``omega(t) = amplitude * t**alpha``; amplitude 0 gives the zero modulus."""

    alpha: float
    amplitude: float = 1.0
    kind = "holder"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError(f"Hoelder exponent must lie in (0, 1], got {self.alpha}")
        if self.amplitude < 0:
            raise ValidationError("amplitude must be nonnegative")

    def log_eval(self, s):
        s = np.asarray(s, dtype=float)
        return self.amplitude * np.exp(-self.alpha * s)

    @property
    def dini_class(self):
        return "hoelder"


@dataclass(frozen=True)
class PowerLogModulus(ModulusDescriptor):
    """``omega(t) = amplitude * |log t|**(-p)`` near 0.

    With ``knee`` set, ``|log t|`` is replaced by ``max(|log t|, knee)`` for
    ``t < 1`` and the modulus is held constant for larger ``t``; ``knee >= p+1``
    makes the profile concave, hence subadditive.
    """

    p: float
    amplitude: float = 1.0
    knee: float | None = None
    kind = "power_log"

    def __post_init__(self):
        if self.p <= 0:
            raise ValidationError("power_log exponent p must be positive")
        if self.amplitude < 0:
            raise ValidationError("amplitude must be nonnegative")

    def log_eval(self, s):
        s = np.asarray(s, dtype=float)
        if self.knee is not None:
            return self.amplitude * np.maximum(s, self.knee) ** (-self.p)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.amplitude * np.where(s > 0, np.abs(s) ** (-self.p), np.inf)
        return out

    @property
    def dini_class(self):
        # int s^{a-p} ds < inf  iff  a < p - 1
        if self.amplitude == 0:
            return "hoelder"
        if self.p <= 1:
            return "none"
        a_max = math.ceil(self.p - 1) - 1
        return f"double_dini({a_max})" if a_max >= 1 else "dini"

    def knots(self):
        return [self.knee] if self.knee is not None else []


class TabulatedModulus(ModulusDescriptor):
    """Piecewise-linear modulus through ``(t_i, omega_i)``.

    Below the first abscissa the modulus is continued by the power law through
    the first two nodes (linearly to zero for a single node); above the last
    one it is held constant.
    """

    kind = "tabulated"

    def __init__(self, t: Sequence[float], omega: Sequence[float], dini_class: str | None = None):
        t = np.asarray(t, dtype=float)
        w = np.asarray(omega, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size < 1:
            raise ValidationError("tabulated modulus needs two equal-length, nonempty columns")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValidationError("tabulated abscissae must be positive and strictly increasing")
        if np.any(w < 0) or np.any(np.diff(w) < 0):
            raise ValidationError("tabulated modulus must be nonnegative and nondecreasing")
        self.t = t
        self.omega = w
        self._declared = dini_class
        if t.size == 1:
            # a single node: linear continuation to zero
            self._beta = 1.0
        elif w[0] > 0 and w[1] > w[0]:
            self._beta = math.log(w[1] / w[0]) / math.log(t[1] / t[0])
        else:
            self._beta = 0.0

    def __repr__(self):
        return f"TabulatedModulus(n={self.t.size}, t=[{self.t[0]:g}, {self.t[-1]:g}])"

    def log_eval(self, s):
        s = np.asarray(s, dtype=float)
        logt = -s
        out = np.empty_like(s)
        lo = logt < math.log(self.t[0])
        with np.errstate(over="ignore"):
            out[lo] = self.omega[0] * np.exp(self._beta * (logt[lo] - math.log(self.t[0])))
        hi = ~lo
        out[hi] = np.interp(np.exp(logt[hi]), self.t, self.omega)
        return out

    @property
    def dini_class(self):
        if self._declared is not None:
            return self._declared
        if self.omega[0] == 0 and np.all(self.omega == 0):
            return "hoelder"
        return "hoelder" if self._beta > 0 else "none"

    def knots(self):
        return list(-np.log(self.t))


class CustomModulus(ModulusDescriptor):
    """User supplied ``omega(t)`` with a declared Dini class."""

    kind = "custom"

    def __init__(self, fn: Callable, dini_class: str = "none", name: str = "custom"):
        self.fn = fn
        self._declared = dini_class
        self.name = name

    def __repr__(self):
        return f"CustomModulus({self.name!r}, {self._declared!r})"

    def log_eval(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(under="ignore", over="ignore"):
            t = np.exp(-s)
        return np.asarray(self.fn(t), dtype=float) * np.ones_like(s)

    @property
    def dini_class(self):
        return self._declared


@dataclass(frozen=True)
class ScaledModulus(ModulusDescriptor):
    """``scale * base(arg_scale * t)``."""

    base: ModulusDescriptor
    scale: float
    arg_scale: float = 1.0
    kind = "scaled"

    def log_eval(self, s):
        return self.scale * self.base.log_eval(np.asarray(s, dtype=float) - math.log(self.arg_scale))

    @property
    def dini_class(self):
        return self.base.dini_class

    def knots(self):
        return [k + math.log(self.arg_scale) for k in self.base.knots()]


@dataclass(frozen=True)
class SumModulus(ModulusDescriptor):
    parts: tuple
    kind = "sum"

    def log_eval(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for p in self.parts:
            out = out + p.log_eval(s)
        return out

    @property
    def dini_class(self):
        return _max_class([p.dini_class for p in self.parts])

    def knots(self):
        return sorted({k for p in self.parts for k in p.knots()})


def save_tabulated(path, modulus: TabulatedModulus) -> None:
    """Write the two-column ``t omega(t)`` text format."""
    np.savetxt(path, np.column_stack([modulus.t, modulus.omega]), fmt="%.17g",
               header="t omega")


def load_tabulated(path, dini_class: str | None = None) -> TabulatedModulus:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValidationError(f"{path}: expected two columns, found {data.shape[1]}")
    return TabulatedModulus(data[:, 0], data[:, 1], dini_class=dini_class)


# ---------------------------------------------------------------------------
# Dini-type integrals


def _tail_integral(g: Callable, s_lo: float, knots=(), eps_cut: float = EPS_CUT) -> float:
    """Integrate ``g`` over ``[s_lo, inf)`` by log-doubling of the cutoff.

    The cutoff ``S_0 = -log(eps_cut)`` is doubled ``_TAIL_LEVELS`` times
    (``eps_cut -> eps_cut**2 -> ...``).  Successive increments ``d_k`` are
    used for a geometric (Richardson) tail estimate; the integral is declared
    divergent (``inf``) when the increments stop contracting.
    """
    s0 = max(-math.log(eps_cut), s_lo + 1.0)
    cuts = [s0 * 2.0**k for k in range(_TAIL_LEVELS + 1)]
    pieces = []
    lo = s_lo
    for hi in cuts:
        pts = [k for k in knots if lo < k < hi]
        val, _ = integrate.quad(lambda s: float(g(s)), lo, hi, points=pts or None,
                                limit=400, epsabs=0.0, epsrel=1e-12)
        pieces.append(val)
        lo = hi
    partial = np.cumsum(pieces)
    total = partial[-1]
    if not np.isfinite(total):
        return math.inf
    d_last, d_prev = pieces[-1], pieces[-2]
    if abs(d_last) <= 1e-14 * max(abs(total), 1e-300):
        return float(total)
    if d_prev <= 0:
        return float(total)
    rho = d_last / d_prev
    if rho >= _DIVERGENCE_RATIO:
        return math.inf
    return float(total + d_last * rho / (1.0 - rho))


def dini_integral(modulus: ModulusDescriptor, T: float, a: int = 0, eps_cut: float = EPS_CUT) -> float:
    """``int_0^T omega(t) |log t|**a / t dt``; ``math.inf`` flags divergence.

    Computed in ``s = -log t`` as ``int_{-log T}^inf omega(e^{-s}) |s|**a ds``
    with the cutoff/tail policy of :func:`_tail_integral`.
    """
    if T <= 0:
        raise ValidationError("T must be positive")
    if a < 0:
        raise ValidationError("a must be a nonnegative integer")
    if a == 0:
        g = modulus.log_eval
    else:
        def g(s):
            return modulus.log_eval(s) * abs(s) ** a
    return _tail_integral(g, -math.log(T), modulus.knots(), eps_cut)


def iterated_dini_integral(modulus: ModulusDescriptor, r: float, eps_cut: float = EPS_CUT) -> float:
    """``int_0^r dt/t int_0^t omega(s)/s ds = int_0^r omega(s)/s log(r/s) ds``."""
    if r <= 0:
        raise ValidationError("r must be positive")
    sr = -math.log(r)

    def g(s):
        return modulus.log_eval(s) * (s - sr)

    return _tail_integral(g, sr, modulus.knots(), eps_cut)


def dini_class_consistent(modulus: ModulusDescriptor, T: float = 0.5, a_max: int = 2) -> bool:
    """Compare the declared class with numerically evaluated integrals."""
    for a in range(a_max + 1):
        finite = math.isfinite(dini_integral(modulus, T, a))
        if finite != modulus.is_double_dini(a):
            return False
    return True


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass(frozen=True)
class CoefficientField:
    """The pair (A, f) on a closed box ``bounds`` with its structural constants."""

    dim: int
    matrix_eval: Callable
    scalar_eval: Callable
    lam: float
    c0: float
    f_sup: float
    modulus_A: ModulusDescriptor
    modulus_f: ModulusDescriptor
    bounds: tuple
    name: str = "custom"
    params: dict = dc_field(default_factory=dict)
    center: tuple | None = None

    @property
    def modulus(self) -> ModulusDescriptor:
        """``omega = omega_A + omega_f``."""
        return SumModulus((self.modulus_A, self.modulus_f))

    def contains(self, x, slack: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((x >= lo - slack) & (x <= hi + slack), axis=-1)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        if not np.all(self.contains(x)):
            raise DomainError(f"point outside the domain box {self.bounds}")
        return x

    def A(self, x):
        return self.matrix_eval(self._check(x))

    def f(self, x):
        return self.scalar_eval(self._check(x))


def eval_matrix(field: CoefficientField, x) -> np.ndarray:
    """A(x) for a point (or array of points) inside the domain box."""
    return field.A(x)


def eval_scalar(field: CoefficientField, x) -> np.ndarray:
    return field.f(x)


def _default_bounds(dim, bounds):
    if bounds is None:
        return tuple((-1.0, 1.0) for _ in range(dim))
    return tuple((float(a), float(b)) for a, b in bounds)


def _max_distance(bounds, center, profile):
    corners = np.array(np.meshgrid(*[list(b) for b in bounds], indexing="ij")).reshape(len(bounds), -1).T
    if profile == "planar":
        return float(np.max(np.abs(corners[:, 0] - center[0])))
    return float(np.max(np.linalg.norm(corners - np.asarray(center), axis=1)))


def _distance(x, center, profile):
    x = np.asarray(x, dtype=float)
    if profile == "planar":
        return np.abs(x[..., 0] - center[0])
    return np.linalg.norm(x - np.asarray(center), axis=-1)


def _scalar_times_identity(a_of_x, dim):
    eye = np.eye(dim)

    def matrix(x):
        a = np.asarray(a_of_x(x), dtype=float)
        return a[..., None, None] * eye
    return matrix


def make_test_family(kind: str, dim: int = 2, bounds=None, center=None, **params) -> CoefficientField:
    """Build one of the shipped analytic coefficient families.

    ``identity``
        A = Id, f = 1.
    ``constant``
        A = ``matrix``, f = ``f`` (defaults Id and 1).
    ``holder``
        A = (1 + amplitude*d**alpha) Id, f = 1 + f_amplitude*d**alpha.
    ``power_log``
        A = (1 + amplitude*phi_p(d)) Id, f = 1 + f_amplitude*phi_p(d) with
        ``phi_p(d) = max(log(1/d), p+1)**(-p)``.
    ``rotating``
        A = R(theta) diag(big, small) R(theta)^T with theta = d**(1/2) (2D).

    ``d`` is the distance to ``center`` (``profile="radial"``, default) or to
    the hyperplane ``{x_1 = center_1}`` (``profile="planar"``).  The center
    defaults to the middle of the box.
    """
    if dim < 2:
        raise ValidationError("dimension must be at least 2")
    bounds = _default_bounds(dim, bounds)
    if len(bounds) != dim:
        raise ValidationError("bounds do not match the dimension")
    if center is None:
        center = tuple(0.5 * (a + b) for a, b in bounds)
    center = tuple(float(c) for c in center)
    profile = params.pop("profile", "radial")
    if profile not in ("radial", "planar"):
        raise ValidationError(f"unknown profile {profile!r}")
    common = dict(dim=dim, bounds=bounds, center=center)
    zero = HolderModulus(1.0, 0.0)

    if kind == "identity":
        _no_extra(kind, params)
        return CoefficientField(
            matrix_eval=_scalar_times_identity(lambda x: np.ones(np.shape(x)[:-1]), dim),
            scalar_eval=lambda x: np.ones(np.shape(x)[:-1]),
            lam=1.0, c0=0.99, f_sup=1.0, modulus_A=zero, modulus_f=zero,
            name="identity", params={}, **common)

    if kind == "constant":
        M = np.asarray(params.pop("matrix", np.eye(dim)), dtype=float)
        fval = float(params.pop("f", 1.0))
        _no_extra(kind, params)
        if M.shape != (dim, dim) or not np.allclose(M, M.T, rtol=0, atol=1e-14):
            raise ValidationError("constant matrix must be symmetric of shape (dim, dim)")
        ev = np.linalg.eigvalsh(M)
        if ev[0] <= 0 or fval <= 0:
            raise ValidationError("constant family needs an SPD matrix and f > 0")
        lam = float(max(ev[-1], 1.0 / ev[0], 1.0))

        def matrix(x, M=M):
            return np.broadcast_to(M, np.shape(x)[:-1] + (dim, dim)).copy()
        return CoefficientField(
            matrix_eval=matrix, scalar_eval=lambda x: np.full(np.shape(x)[:-1], fval),
            lam=lam, c0=0.99 * fval, f_sup=fval, modulus_A=zero, modulus_f=zero,
            name="constant", params={"matrix": M.tolist(), "f": fval}, **common)

    if kind == "holder":
        alpha = float(params.pop("alpha", 0.5))
        amp = float(params.pop("amplitude", 0.25))
        famp = float(params.pop("f_amplitude", 0.0))
        _no_extra(kind, params)
        if not 0 < alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
        if amp < 0 or famp < 0:
            raise ValidationError("amplitudes must be nonnegative")
        dmax = _max_distance(bounds, center, profile)

        def prof(x):
            return _distance(x, center, profile) ** alpha
        return CoefficientField(
            matrix_eval=_scalar_times_identity(lambda x: 1.0 + amp * prof(x), dim),
            scalar_eval=lambda x: 1.0 + famp * prof(x),
            lam=1.0 + amp * dmax**alpha, c0=0.99, f_sup=1.0 + famp * dmax**alpha,
            modulus_A=HolderModulus(alpha, amp), modulus_f=HolderModulus(alpha, famp),
            name="holder",
            params={"alpha": alpha, "amplitude": amp, "f_amplitude": famp, "profile": profile},
            **common)

    if kind == "power_log":
        p = float(params.pop("p", 3.0))
        amp = float(params.pop("amplitude", 0.0))
        famp = float(params.pop("f_amplitude", 1.0))
        _no_extra(kind, params)
        if p <= 0:
            raise ValidationError("p must be positive")
        if amp < 0 or famp < 0:
            raise ValidationError("amplitudes must be nonnegative")
        knee = p + 1.0
        top = knee ** (-p)

        def plog(x):
            d = _distance(x, center, profile)
            with np.errstate(divide="ignore"):
                s = -np.log(d)
            return np.maximum(s, knee) ** (-p)
        return CoefficientField(
            matrix_eval=_scalar_times_identity(lambda x: 1.0 + amp * plog(x), dim),
            scalar_eval=lambda x: 1.0 + famp * plog(x),
            lam=1.0 + amp * top, c0=0.99, f_sup=1.0 + famp * top,
            modulus_A=PowerLogModulus(p, amp, knee), modulus_f=PowerLogModulus(p, famp, knee),
            name="power_log",
            params={"p": p, "amplitude": amp, "f_amplitude": famp, "profile": profile},
            **common)

    if kind == "rotating":
        if dim != 2:
            raise ValidationError("rotating family is two-dimensional")
        big = float(params.pop("big", 2.0))
        small = float(params.pop("small", 0.5))
        _no_extra(kind, params)
        if not 0 < small <= big:
            raise ValidationError("need 0 < small <= big")
        mid, half = 0.5 * (big + small), 0.5 * (big - small)

        def matrix(x):
            th = np.sqrt(_distance(x, center, profile))
            c2, s2 = np.cos(2 * th), np.sin(2 * th)
            out = np.empty(np.shape(th) + (2, 2))
            out[..., 0, 0] = mid + half * c2
            out[..., 1, 1] = mid - half * c2
            out[..., 0, 1] = out[..., 1, 0] = half * s2
            return out
        return CoefficientField(
            matrix_eval=matrix, scalar_eval=lambda x: np.ones(np.shape(x)[:-1]),
            lam=float(max(big, 1.0 / small)), c0=0.99, f_sup=1.0,
            # ||A(x)-A(y)|| = (big-small)|sin(theta_x-theta_y)| <= (big-small)|x-y|^(1/2)
            modulus_A=HolderModulus(0.5, big - small), modulus_f=zero,
            name="rotating", params={"big": big, "small": small, "profile": profile},
            **common)

    raise ValidationError(f"unknown coefficient family {kind!r}")


def _no_extra(kind, params):
    if params:
        raise ValidationError(f"unexpected parameters for {kind!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# diagnostics


def _sample_box(rng, bounds, n):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return lo + (hi - lo) * rng.random((n, len(bounds)))


def _pairs_within(rng, field, t, n):
    """Point pairs at distance <= t, both inside the box.

    Half of the pairs sit at distance exactly ``t``; a quarter are anchored at
    the family center, where the shipped families concentrate their roughness.
    """
    dim = field.dim
    x = _sample_box(rng, field.bounds, n)
    if field.center is not None:
        x[: n // 4] = np.asarray(field.center)
    d = rng.normal(size=(n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = np.where(np.arange(n) % 2 == 0, t, t * rng.random(n))
    y = x + rad[:, None] * d
    ok = field.contains(y, slack=0.0)
    return x[ok], y[ok]


def _opnorm_sym(D):
    return np.max(np.abs(np.linalg.eigvalsh(D)), axis=-1)


def modulus_estimate(field: CoefficientField, t_grid, budget: int = 1000, seed: int = 0):
    """Empirical moduli of A and f on ``t_grid`` from sampled point pairs.

    Returns ``(omega_A, omega_f)`` as :class:`TabulatedModulus`; both are made
    nondecreasing by a cumulative maximum.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValidationError("t_grid must be positive and strictly increasing")
    if budget < 1000:
        raise ValidationError("budget must be at least 1000 pairs per t")
    rng = np.random.default_rng(seed)
    wa = np.zeros_like(t_grid)
    wf = np.zeros_like(t_grid)
    for i, t in enumerate(t_grid):
        x, y = _pairs_within(rng, field, t, budget)
        if x.size == 0:
            continue
        wa[i] = np.max(_opnorm_sym(field.matrix_eval(x) - field.matrix_eval(y)))
        wf[i] = np.max(np.abs(field.scalar_eval(x) - field.scalar_eval(y)))
    wa = np.maximum.accumulate(wa)
    wf = np.maximum.accumulate(wf)
    return TabulatedModulus(t_grid, wa), TabulatedModulus(t_grid, wf)


def validate_field(field: CoefficientField, samples: int = 10_000, seed: int = 0,
                   slack: float = 1e-3) -> dict:
    """Check the structural invariants of a field at random points.

    Returns a report; ``report["ok"]`` is the conjunction of all checks.
    """
    rng = np.random.default_rng(seed)
    x = _sample_box(rng, field.bounds, samples)
    A = field.matrix_eval(x)
    fx = field.scalar_eval(x)
    asym = float(np.max(np.abs(A - np.swapaxes(A, -1, -2))))
    ev = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
    tol = 1e-12
    rep = {
        "symmetry_error": asym,
        "eig_min": float(ev.min()),
        "eig_max": float(ev.max()),
        "f_min": float(fx.min()),
        "f_max": float(fx.max()),
    }
    rep["symmetric"] = asym <= 1e-12
    rep["elliptic"] = bool(ev.min() >= 1.0 / field.lam - tol and ev.max() <= field.lam + tol)
    rep["f_bounds"] = bool(fx.min() > field.c0 and fx.max() <= field.f_sup + tol)
    # pairwise modulus check
    worst = -np.inf
    for t in (1e-3, 1e-2, 0.1, 0.5):
        xa, ya = _pairs_within(rng, field, t, max(samples // 4, 1000))
        if xa.size == 0:
            continue
        dist = np.linalg.norm(xa - ya, axis=1)
        da = _opnorm_sym(field.matrix_eval(xa) - field.matrix_eval(ya))
        df = np.abs(field.scalar_eval(xa) - field.scalar_eval(ya))
        worst = max(worst, float(np.max(da - field.modulus_A(dist))),
                    float(np.max(df - field.modulus_f(dist))))
    rep["modulus_excess"] = worst
    rep["modulus"] = worst <= slack
    rep["ok"] = all(rep[k] for k in ("symmetric", "elliptic", "f_bounds", "modulus"))
    return rep
