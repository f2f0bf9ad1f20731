"""Run configuration: ``key = value`` sections parsed with :mod:`configparser`.

Sections and keys (defaults in brackets)::

    [domain]    bounds = x0 x1 y0 y1, h, dim [2]
    [family]    kind = identity | constant | holder | power_log | rotating | expression
                plus the family parameters (see ``make_test_family``); ``center = cx cy``;
                ``profile = radial | planar``.  ``expression`` takes ``a11``, ``a12``,
                ``a22``, ``f`` and optional ``modulus_A`` / ``modulus_f``
                (``zero``, ``holder ALPHA AMP``, ``power_log P AMP``, ``estimate`` [estimate]).
    [obstacle]  psi [0], h_term [the family f], boundary (data of the original unknown),
                or ``benchmark = NAME`` for a shipped problem (replaces [family] and boundary)
    [solver]    tol [1e-8], max_sweeps [100000], omega [1.5], coarse_tol [1e-3],
                coarse_sweeps [2000], polish [yes]
    [analysis]  q [2^-0.5], rmin_factor [8], n_theta [512], n_rho [64],
                c_corr = NUMBER | calibrate [0], eig_threshold [0.01], margin_cells [2],
                min_trusted [4], seed [0]
    [outputs]   directory [out], plots [no], dump_samples [no]

Numbers may be written as constant expressions (``1/128``).  Every error
names the file and line of the offending entry.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import AnalysisConfig
from .coeffs import (CoefficientField, HolderModulus, PowerLogModulus, ValidationError, make_test_family,
                     modulus_estimate)
from .expr import Expr, ExprError, parse_number
from .grid import Grid
from .problems import BENCHMARKS, make_benchmark
from .solver import SolverOptions, reduce_obstacle

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

SOLVE_SECTIONS = ("domain", "family", "obstacle", "solver")
SECTIONS = SOLVE_SECTIONS + ("analysis", "outputs")

_FAMILY_KEYS = {
    "identity": set(),
    "constant": {"matrix", "f"},
    "holder": {"alpha", "amplitude", "f_amplitude"},
    "power_log": {"p", "amplitude", "f_amplitude"},
    "rotating": {"big", "small"},
    "expression": {"a11", "a12", "a22", "f", "modulus_a", "modulus_f"},
}
_KEYS = {
    "domain": {"bounds", "h", "dim"},
    "family": {"kind", "center", "profile"}.union(*_FAMILY_KEYS.values()),
    "obstacle": {"psi", "h_term", "boundary", "benchmark"},
    "solver": {"tol", "max_sweeps", "omega", "coarse_tol", "coarse_sweeps", "polish"},
    "analysis": {"q", "rmin_factor", "n_theta", "n_rho", "c_corr", "eig_threshold", "margin_cells",
                 "min_trusted", "seed"},
    "outputs": {"directory", "plots", "dump_samples"},
}


class ConfigError(ValidationError):
    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        loc = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(loc + message)


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` (and ``(section, None)`` for headers)."""
    out, sec = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and sec is not None:
            out.setdefault((sec, m.group(1).strip().lower()), no)
    return out


@dataclass(frozen=True, eq=False)
class RunConfig:
    path: Path | None
    grid: Grid
    field: CoefficientField            # coefficients seen by the analysis
    solve_field: CoefficientField      # coefficients seen by the solver
    f: np.ndarray | None               # nodal right-hand side override (obstacle reduction)
    boundary: object                   # callable, Dirichlet data for u
    solver: SolverOptions
    analysis: AnalysisConfig
    calibrate: bool
    seed: int
    out_dir: Path
    plots: bool
    dump_samples: bool
    family_label: str
    config_hash: str
    analysis_hash: str


class _Reader:
    def __init__(self, cp, lines, path):
        self.cp, self.lines, self.path = cp, lines, path

    def error(self, section, key, msg):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        where = f"[{section}] {key}: " if key else f"[{section}] "
        return ConfigError(where + msg, self.path, line)

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                raise self.error(section, None, f"missing required key {key!r}")
            return default
        return self.cp.get(section, key).strip()

    def number(self, section, key, default=None, positive=False, integer=False):
        if not self.has(section, key):
            if default is None:
                raise self.error(section, None, f"missing required key {key!r}")
            return default
        try:
            v = parse_number(self.cp.get(section, key))
        except ExprError as exc:
            raise self.error(section, key, str(exc)) from None
        if integer:
            if v != int(v):
                raise self.error(section, key, f"expected an integer, got {v!r}")
            v = int(v)
        if positive and v <= 0:
            raise self.error(section, key, f"must be positive, got {v!r}")
        return v

    def numbers(self, section, key, count=None, default=None):
        if not self.has(section, key):
            if default is None:
                raise self.error(section, None, f"missing required key {key!r}")
            return default
        try:
            vals = [parse_number(t) for t in self.cp.get(section, key).replace(",", " ").split()]
        except ExprError as exc:
            raise self.error(section, key, str(exc)) from None
        if count is not None and len(vals) != count:
            raise self.error(section, key, f"expected {count} numbers, got {len(vals)}")
        return vals

    def flag(self, section, key, default=False):
        if not self.has(section, key):
            return default
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            raise self.error(section, key, "expected yes/no") from None

    def expr(self, section, key, default=None):
        if not self.has(section, key):
            return default
        try:
            return Expr(self.cp.get(section, key))
        except ExprError as exc:
            raise self.error(section, key, str(exc)) from None


def _canonical_hash(cp, sections) -> str:
    blob = {s: {k: " ".join(v.split()) for k, v in sorted(cp.items(s))} for s in sections if cp.has_section(s)}
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()


def _corner_check(rd, section, key, ex: Expr, grid: Grid):
    corners = np.array([[x, y] for x in grid.bounds[0] for y in grid.bounds[1]], dtype=float)
    v = ex(corners)
    if not np.all(np.isfinite(v)):
        raise rd.error(section, key, f"expression {ex.text!r} is not finite at the domain corners")


def _modulus(rd, key, text, field_fn, estimate):
    toks = text.split()
    try:
        if toks[0] == "zero":
            return HolderModulus(1.0, 0.0)
        if toks[0] == "holder" and len(toks) == 3:
            return HolderModulus(parse_number(toks[1]), parse_number(toks[2]))
        if toks[0] == "power_log" and len(toks) == 3:
            p = parse_number(toks[1])
            return PowerLogModulus(p, parse_number(toks[2]), p + 1.0)
        if toks[0] == "estimate" and len(toks) == 1:
            return estimate(field_fn)
    except (ExprError, ValidationError) as exc:
        raise rd.error("family", key, str(exc)) from None
    raise rd.error("family", key, f"cannot read modulus {text!r}")


def _expression_family(rd, grid, seed):
    dim = grid.dim
    ex = {k: rd.expr("family", k) for k in ("a11", "a12", "a22", "f")}
    for k in ("a11", "a22", "f"):
        if ex[k] is None:
            raise rd.error("family", None, f"expression family needs {k!r}")
    if ex["a12"] is None:
        ex["a12"] = Expr("0")
    for k, e in ex.items():
        _corner_check(rd, "family", k, e, grid)

    def matrix(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = ex["a11"](x)
        out[..., 1, 1] = ex["a22"](x)
        out[..., 0, 1] = out[..., 1, 0] = ex["a12"](x)
        return out

    def scalar(x):
        return ex["f"](np.asarray(x, dtype=float))

    pts = grid.points().reshape(-1, dim)
    A = matrix(pts)
    ev = np.linalg.eigvalsh(A)
    fv = scalar(pts)
    if not np.all(np.isfinite(ev)) or ev.min() <= 0:
        raise rd.error("family", "a11", "matrix field is not positive definite on the grid")
    if not np.all(np.isfinite(fv)) or fv.min() <= 0:
        raise rd.error("family", "f", "f must be positive on the grid")
    lam = float(max(ev.max(), 1.0 / ev.min())) * (1 + 1e-9)
    base = CoefficientField(dim=dim, matrix_eval=matrix, scalar_eval=scalar, lam=lam, c0=0.99 * float(fv.min()),
                            f_sup=float(fv.max()) * (1 + 1e-9), modulus_A=HolderModulus(1.0, 0.0),
                            modulus_f=HolderModulus(1.0, 0.0), bounds=grid.bounds, name="expression",
                            params={k: e.text for k, e in ex.items()})
    diam = float(np.linalg.norm([b[1] - b[0] for b in grid.bounds]))
    tgrid = np.geomspace(1e-4, diam, 24)
    cache = {}

    def estimate(which):
        if "est" not in cache:
            cache["est"] = modulus_estimate(base, tgrid, budget=1000, seed=seed)
        return cache["est"][which]
    mA = _modulus(rd, "modulus_a", rd.raw("family", "modulus_a", "estimate"), 0, estimate)
    mf = _modulus(rd, "modulus_f", rd.raw("family", "modulus_f", "estimate"), 1, estimate)
    return dataclasses.replace(base, modulus_A=mA, modulus_f=mf)


def _family(rd, grid, seed):
    kind = rd.raw("family", "kind")
    if kind not in _FAMILY_KEYS:
        raise rd.error("family", "kind", f"unknown family {kind!r}; choose from {sorted(_FAMILY_KEYS)}")
    allowed = _FAMILY_KEYS[kind] | {"kind", "center", "profile"}
    for k in rd.cp.options("family"):
        if k not in allowed:
            raise rd.error("family", k, f"not a parameter of the {kind!r} family")
    if kind == "expression":
        return _expression_family(rd, grid, seed)
    params = {}
    for k in _FAMILY_KEYS[kind]:
        if not rd.has("family", k):
            continue
        if k == "matrix":
            vals = rd.numbers("family", k, 3)
            params[k] = [[vals[0], vals[1]], [vals[1], vals[2]]]
        else:
            params[k] = rd.number("family", k)
    if rd.has("family", "profile"):
        params["profile"] = rd.raw("family", "profile")
    center = rd.numbers("family", "center", grid.dim) if rd.has("family", "center") else None
    try:
        return make_test_family(kind, dim=grid.dim, bounds=grid.bounds, center=center, **params)
    except ValidationError as exc:
        msg = str(exc)
        key = next((k for k in sorted(params, key=len, reverse=True) if k in msg and rd.has("family", k)), "kind")
        raise rd.error("family", key, msg) from None


def parse_config(text: str, path=None) -> RunConfig:
    path = Path(path) if path is not None else None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    rd = _Reader(cp, _line_index(text), path)
    for s in cp.sections():
        if s not in SECTIONS:
            raise rd.error(s, None, f"unknown section; expected one of {list(SECTIONS)}")
        for k in cp.options(s):
            if k not in _KEYS[s]:
                raise rd.error(s, k, "unknown key")
    for s in ("domain", "obstacle"):
        if not cp.has_section(s):
            raise ConfigError(f"missing section [{s}]", path)
    for s in SECTIONS:
        if not cp.has_section(s):
            cp.add_section(s)

    # domain
    dim = rd.number("domain", "dim", 2, integer=True)
    if dim != 2:
        raise rd.error("domain", "dim", "the solver is two-dimensional")
    b = rd.numbers("domain", "bounds", 2 * dim)
    bounds = tuple((b[2 * k], b[2 * k + 1]) for k in range(dim))
    h = rd.number("domain", "h", positive=True)
    try:
        grid = Grid.from_bounds(bounds, h)
    except ValidationError as exc:
        raise rd.error("domain", "h" if "divide" in str(exc) else "bounds", str(exc)) from None
    seed = rd.number("analysis", "seed", 0, integer=True)

    # family and obstacle
    bench_name = rd.raw("obstacle", "benchmark", "") or None
    psi = rd.expr("obstacle", "psi")
    h_term = rd.expr("obstacle", "h_term")
    if bench_name is not None:
        if bench_name not in BENCHMARKS:
            raise rd.error("obstacle", "benchmark", f"unknown benchmark {bench_name!r}; choose from {list(BENCHMARKS)}")
        for k in ("psi", "h_term", "boundary"):
            if rd.has("obstacle", k):
                raise rd.error("obstacle", k, "cannot be combined with a benchmark")
        if cp.options("family"):
            raise rd.error("family", None, "a benchmark fixes the coefficients; remove [family]")
        bench = make_benchmark(bench_name)
        if tuple(map(tuple, bench.bounds)) != bounds:
            raise rd.error("domain", "bounds", f"benchmark {bench_name!r} lives on {bench.bounds}")
        field, boundary_u, f_override, label = bench.field, bench.boundary, None, f"benchmark:{bench_name}"
    else:
        if not cp.options("family"):
            raise ConfigError("missing section [family]", path)
        field = _family(rd, grid, seed)
        g = rd.expr("obstacle", "boundary")
        if g is None:
            raise rd.error("obstacle", None, "missing required key 'boundary'")
        for key, e in (("boundary", g), ("psi", psi), ("h_term", h_term)):
            if e is not None:
                _corner_check(rd, "obstacle", key, e, grid)
        label = field.name
        f_override = None
        if psi is None:
            boundary_u = g
        else:
            def boundary_u(x, g=g, psi=psi):
                return g(x) - psi(x)
        if psi is not None or h_term is not None:
            f_override = reduce_obstacle(field, h_term if h_term is not None else field.scalar_eval,
                                         psi if psi is not None else 0.0, grid)
        bvals = boundary_u(grid.points())[~grid.interior_mask()]
        if np.any(bvals < -1e-14):
            raise rd.error("obstacle", "boundary", "boundary data must lie above the obstacle")
    analysis_field = field if f_override is None else _reduced_field(field, grid, f_override)

    # solver
    omega = rd.number("solver", "omega", 1.5)
    if not 0 < omega < 2:
        raise rd.error("solver", "omega", "relaxation factor must lie in (0, 2)")
    opts = SolverOptions(
        tol=rd.number("solver", "tol", 1e-8, positive=True),
        max_sweeps=rd.number("solver", "max_sweeps", 100_000, positive=True, integer=True),
        omega=omega,
        coarse_tol=rd.number("solver", "coarse_tol", 1e-3, positive=True),
        coarse_sweeps=rd.number("solver", "coarse_sweeps", 2000, positive=True, integer=True),
        polish=rd.flag("solver", "polish", True))

    # analysis
    cc = rd.raw("analysis", "c_corr", "0")
    calibrate = cc == "calibrate"
    c_corr = 0.0 if calibrate else rd.number("analysis", "c_corr", 0.0)
    if c_corr < 0:
        raise rd.error("analysis", "c_corr", "must be nonnegative or 'calibrate'")
    q = rd.number("analysis", "q", 2**-0.5)
    if not 0 < q < 1:
        raise rd.error("analysis", "q", "ratio must lie in (0, 1)")
    acfg = AnalysisConfig(
        q=q, rmin_factor=rd.number("analysis", "rmin_factor", 8.0, positive=True),
        n_theta=rd.number("analysis", "n_theta", 512, positive=True, integer=True),
        n_rho=rd.number("analysis", "n_rho", 64, positive=True, integer=True),
        c_corr=c_corr, eig_threshold=rd.number("analysis", "eig_threshold", 1e-2, positive=True),
        margin_cells=rd.number("analysis", "margin_cells", 2, integer=True),
        min_trusted=rd.number("analysis", "min_trusted", 4, positive=True, integer=True))

    # outputs
    out = Path(rd.raw("outputs", "directory", "out"))
    if not out.is_absolute() and path is not None:
        out = path.parent / out

    return RunConfig(path=path, grid=grid, field=analysis_field, solve_field=field, f=f_override,
                     boundary=boundary_u, solver=opts, analysis=acfg, calibrate=calibrate, seed=seed,
                     out_dir=out, plots=rd.flag("outputs", "plots"), dump_samples=rd.flag("outputs", "dump_samples"),
                     family_label=label, config_hash=_canonical_hash(cp, SOLVE_SECTIONS),
                     analysis_hash=_canonical_hash(cp, SOLVE_SECTIONS + ("analysis",)))


def _reduced_field(field: CoefficientField, grid: Grid, f: np.ndarray) -> CoefficientField:
    """``field`` with its scalar part replaced by the interpolated reduced right-hand side."""
    fv = np.array(f)

    def scalar(x):
        return grid.interpolate(fv, x)
    inner = fv[1:-1, 1:-1]
    # the reduced f is only known on nodes; its modulus is estimated there
    diffs = [np.abs(np.diff(fv, axis=k)).max() for k in range(grid.dim)]
    lip = max(diffs) / grid.h
    return dataclasses.replace(field, scalar_eval=scalar, c0=0.99 * float(inner.min()),
                               f_sup=float(np.abs(fv).max()), modulus_f=HolderModulus(1.0, lip),
                               name=field.name + "+obstacle")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path) from None
    return parse_config(text, path)
