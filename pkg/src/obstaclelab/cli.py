"""Command-line front end.

    obstaclelab solve CONFIG
    obstaclelab weiss CONFIG [--solution PATH] [--points SELECTOR]
    obstaclelab monneau CONFIG [--solution PATH] [--points SELECTOR]
    obstaclelab classify CONFIG [--solution PATH]

SELECTOR is ``all`` (default) or ``nearest(x,y)``.  Exit codes: 0 ok,
1 configuration or input error, 2 solver did not converge, 3 the selector
matched no free-boundary point.  ``OBSTACLELAB_THREADS`` sets the number of
worker threads for per-point analyses (default 1).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import classification_report, classify_point, write_report
from .coeffs import DomainError, ValidationError
from .config import ConfigError, RunConfig, load_config
from .energies import calibrate_c_corr, monneau_trace, weiss_trace
from .geometry import dump_sample_csv, free_boundary, normalization_map, rescale
from .grid import read_grid_field, write_grid_field
from .solver import solution_from_u, solve_obstacle
from .svg import line_chart, scatter_plot

log = logging.getLogger("obstaclelab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_EMPTY = 0, 1, 2, 3
THREADS_ENV = "OBSTACLELAB_THREADS"
SOLUTION_NAME = "solution.grid"


class CLIError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise CLIError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CLIError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


class Staging:
    """Collect outputs in a scratch directory and move them into place at the end."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))

    def path(self, name: str) -> Path:
        p = self.tmp / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def commit(self) -> None:
        for entry in sorted(self.tmp.iterdir()):
            dest = self.out_dir / entry.name
            if entry.is_dir():
                # replace whole subdirectories so stale per-point files disappear
                if dest.exists():
                    old = Path(tempfile.mkdtemp(prefix=".old-", dir=self.out_dir))
                    os.replace(dest, old / entry.name)
                    os.replace(entry, dest)
                    shutil.rmtree(old)
                else:
                    os.replace(entry, dest)
            else:
                os.replace(entry, dest)
        self.tmp.rmdir()

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _hash_comment(cfg: RunConfig) -> str:
    return f"config_hash={cfg.config_hash}"


# ---------------------------------------------------------------------------
# solution artifact


def _load_solution(cfg: RunConfig, path: Path | None):
    path = Path(path) if path is not None else cfg.out_dir / SOLUTION_NAME
    if not path.exists():
        raise CLIError(f"{path}: solution artifact not found; run 'obstaclelab solve' first")
    try:
        grid, u, meta = read_grid_field(path)
    except ValidationError as exc:
        raise CLIError(str(exc)) from None
    stored = meta.get("config_hash")
    if stored != cfg.config_hash:
        raise CLIError(f"{path}: artifact was produced by a different configuration "
                       f"(hash {stored} != {cfg.config_hash}); refusing to mix configurations")
    if grid.shape != cfg.grid.shape or not np.isclose(grid.h, cfg.grid.h):
        raise CLIError(f"{path}: grid does not match the configuration")
    return solution_from_u(cfg.grid, cfg.solve_field, u, f=cfg.f, tol=cfg.solver.tol, eps_c=cfg.solver.eps_c)


def _field_for_analysis(cfg: RunConfig, sol):
    # the analysis normalizes with the (possibly reduced) right-hand side
    if cfg.field is sol.field:
        return sol
    import dataclasses
    return dataclasses.replace(sol, field=cfg.field)


_NEAREST = re.compile(r"^\s*nearest\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")


def select_points(points: np.ndarray, selector: str) -> list[int]:
    """Indices of free-boundary points matched by ``selector``."""
    sel = selector.strip()
    if sel == "all":
        return list(range(len(points)))
    m = _NEAREST.match(sel)
    if m:
        try:
            target = np.array([float(m.group(1)), float(m.group(2))])
        except ValueError:
            raise CLIError(f"cannot read the coordinates in selector {selector!r}") from None
        if len(points) == 0:
            return []
        return [int(np.argmin(np.linalg.norm(points - target, axis=1)))]
    raise CLIError(f"unknown point selector {selector!r}; use 'all' or 'nearest(x,y)'")


def _selected(cfg, args):
    sol = _field_for_analysis(cfg, _load_solution(cfg, args.solution))
    fb = free_boundary(sol)
    idx = select_points(fb.points, args.points)
    if not idx:
        raise CLIError(f"selector {args.points!r} matched no free-boundary point", EXIT_EMPTY)
    return sol, fb, idx


def _trace_kwargs(cfg):
    a = cfg.analysis
    return dict(quad=a.quad(cfg.grid.dim), q=a.q, rmin_factor=a.rmin_factor, margin_cells=a.margin_cells,
                r_cap=a.r_cap)


def _apply_c_corr(cfg, traces, report):
    """Fixed constant or the calibrate-then-hold-out policy; updates ``report``."""
    traces = list(traces)
    if not cfg.calibrate:
        report["c_corr_policy"] = "fixed"
        report["C_corr"] = cfg.analysis.c_corr
        return [t.with_c_corr(cfg.analysis.c_corr) for t in traces]
    cal, held = traces[0::2], traces[1::2]
    C = 2.0 * calibrate_c_corr(cal)
    out = [t.with_c_corr(C) for t in traces]
    held_inc = [t.with_c_corr(C).min_increment() for t in held]
    held_inc = [v for v in held_inc if np.isfinite(v)]
    report.update({"c_corr_policy": "calibrate", "C_corr": C, "calibration_points": len(cal),
                   "held_out_points": len(held),
                   "held_out_min_increment": float(min(held_inc)) if held_inc else None})
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, args) -> int:
    sol = solve_obstacle(cfg.grid, cfg.solve_field, cfg.boundary, cfg.solver, f=cfg.f)
    kkt = sol.kkt.to_dict()
    kkt.pop("elapsed", None)
    fb = free_boundary(_field_for_analysis(cfg, sol))
    with Staging(cfg.out_dir) as st:
        write_grid_field(st.path(SOLUTION_NAME), cfg.grid, sol.u, config_hash=cfg.config_hash,
                         converged=str(sol.kkt.converged).lower(), family=cfg.family_label)
        _write_json(st.path("kkt.json"), {"config_hash": cfg.config_hash, "family": cfg.family_label,
                                          "h": cfg.grid.h, "shape": list(cfg.grid.shape),
                                          "free_boundary_points": len(fb), "kkt": kkt})
        fb.to_csv(st.path("free_boundary.csv"), comment=_hash_comment(cfg))
        if cfg.plots:
            scatter_plot(st.path("free_boundary.svg"), [("free boundary", fb.points.tolist())],
                         title=f"free boundary ({cfg.family_label})", comment=_hash_comment(cfg))
    msg = f"solve: {sol.kkt.message or 'converged'}; complementarity {sol.kkt.complementarity:.3g} (tol {sol.kkt.tol:.3g}), " \
          f"{sol.kkt.sweeps} sweeps, {len(fb)} free-boundary points"
    if not sol.kkt.converged:
        print(msg + " -- NOT CONVERGED; best iterate written", file=sys.stderr)
        return EXIT_SOLVER
    print(msg, file=sys.stderr)
    return EXIT_OK


def cmd_weiss(cfg: RunConfig, args) -> int:
    sol, fb, idx = _selected(cfg, args)
    kw = _trace_kwargs(cfg)

    def run(i):
        x0 = fb.points[i]
        return weiss_trace(sol, x0, normalization_map(sol.field, x0), **kw)
    report = {"config_hash": cfg.config_hash, "analysis_hash": cfg.analysis_hash, "family": cfg.family_label,
              "h": cfg.grid.h, "q": cfg.analysis.q, "rmin_factor": cfg.analysis.rmin_factor}
    traces = _apply_c_corr(cfg, _pmap(run, idx, _threads()), report)
    points = []
    with Staging(cfg.out_dir) as st:
        for i, tr in zip(idx, traces):
            name = f"weiss/point_{i:04d}"
            tr.to_csv(st.path(name + ".csv"), comment=_hash_comment(cfg))
            rec = tr.summary()
            rec["index"] = i
            points.append(rec)
            if cfg.plots:
                m = tr.trusted
                line_chart(st.path(name + ".svg"),
                           [("phi", tr.radii[m][::-1], tr.phi[m][::-1]),
                            ("phi + correction", tr.radii[m][::-1], tr.monitor[m][::-1])],
                           title=f"Weiss energy at ({tr.x0[0]:.4f}, {tr.x0[1]:.4f})", xlabel="r",
                           ylabel="energy", logx=True, comment=_hash_comment(cfg))
            if cfg.dump_samples and tr.n_trusted:
                r = float(np.min(tr.radii[tr.trusted]))
                dump_sample_csv(rescale(sol, tr.x0, r, normalization_map(sol.field, tr.x0), kw["quad"],
                                        rmin_factor=cfg.analysis.rmin_factor), st.path(name + "_sample.csv"))
        report["points"] = points
        _write_json(st.path("weiss/summary.json"), report)
    print(f"weiss: {len(idx)} trace(s) written, C_corr = {report['C_corr']:.6g}", file=sys.stderr)
    return EXIT_OK


def _cached_classes(cfg):
    """Classification records from a previous ``classify`` run with the same analysis settings."""
    path = cfg.out_dir / "classification.json"
    if not path.exists():
        return {}
    try:
        rep = json.loads(path.read_text())
    except (OSError, ValueError):
        return {}
    if rep.get("meta", {}).get("analysis_hash") != cfg.analysis_hash:
        return {}
    return {tuple(np.round(p["x0"], 12)): p for p in rep.get("points", [])}


def cmd_monneau(cfg: RunConfig, args) -> int:
    sol, fb, idx = _selected(cfg, args)
    kw = _trace_kwargs(cfg)
    cache = _cached_classes(cfg)

    def run(i):
        x0 = fb.points[i]
        rec = cache.get(tuple(np.round(x0, 12)))
        if rec is None:
            c = classify_point(sol, x0, cfg.analysis)
            label, Q = c.label, c.Q
        else:
            label, Q = rec["verdict"], rec["Q"]
        if not label.startswith("Singular"):
            return i, label, None
        return i, label, monneau_trace(sol, x0, normalization_map(sol.field, x0), Q, **kw)
    results = _pmap(run, idx, _threads())
    kept = [(i, tr) for i, _, tr in results if tr is not None]
    skipped = [(i, lab) for i, lab, tr in results if tr is None]
    for i, lab in skipped:
        x = fb.points[i]
        print(f"monneau: point {i} at ({x[0]:.6g}, {x[1]:.6g}) is {lab}, not singular; skipped", file=sys.stderr)
    report = {"config_hash": cfg.config_hash, "analysis_hash": cfg.analysis_hash, "family": cfg.family_label,
              "h": cfg.grid.h, "skipped": [{"index": i, "verdict": lab} for i, lab in skipped]}
    traces = _apply_c_corr(cfg, [tr for _, tr in kept], report)
    points = []
    with Staging(cfg.out_dir) as st:
        for (i, _), tr in zip(kept, traces):
            name = f"monneau/point_{i:04d}"
            tr.to_csv(st.path(name + ".csv"), comment=_hash_comment(cfg))
            rec = tr.summary()
            rec["index"] = i
            points.append(rec)
            if cfg.plots:
                m = tr.trusted
                line_chart(st.path(name + ".svg"),
                           [("deviation", tr.radii[m][::-1], tr.deviation[m][::-1]),
                            ("monitor", tr.radii[m][::-1], tr.monitor[m][::-1])],
                           title=f"Monneau monitor at ({tr.x0[0]:.4f}, {tr.x0[1]:.4f})", xlabel="r",
                           ylabel="sphere deviation", logx=True, comment=_hash_comment(cfg))
        report["points"] = points
        _write_json(st.path("monneau/summary.json"), report)
    print(f"monneau: {len(kept)} trace(s) written, {len(skipped)} point(s) skipped", file=sys.stderr)
    return EXIT_OK


def cmd_classify(cfg: RunConfig, args) -> int:
    sol = _field_for_analysis(cfg, _load_solution(cfg, args.solution))
    fb = free_boundary(sol)
    classes = _pmap(lambda p: classify_point(sol, p, cfg.analysis), list(fb.points), _threads())
    a = cfg.analysis
    meta = {"config_hash": cfg.config_hash, "analysis_hash": cfg.analysis_hash, "family": cfg.family_label,
            "h": cfg.grid.h, "q": a.q, "rmin_factor": a.rmin_factor, "margin_cells": a.margin_cells,
            "n_theta": a.n_theta, "n_rho": a.n_rho, "C_corr": a.c_corr, "eig_threshold": a.eig_threshold}
    rep = classification_report(classes, meta)
    with Staging(cfg.out_dir) as st:
        write_report(rep, st.path("classification.json"), st.path("classification.csv"), comment=_hash_comment(cfg))
        if cfg.plots:
            groups = {}
            for c in classes:
                groups.setdefault(c.label, []).append([float(c.x0[0]), float(c.x0[1])])
            scatter_plot(st.path("classification.svg"), sorted(groups.items()),
                         title=f"free boundary by verdict ({cfg.family_label})", comment=_hash_comment(cfg))
    counts = {}
    for c in classes:
        counts[c.label] = counts.get(c.label, 0) + 1
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())) or "empty free boundary"
    print(f"classify: {len(classes)} point(s); {summary}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "weiss": cmd_weiss, "monneau": cmd_monneau, "classify": cmd_classify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obstaclelab",
                                description="Variable-coefficient obstacle problem: solve and analyze the free boundary.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "solve the obstacle problem and write the solution artifact"),
                           ("weiss", "Weiss energy traces at free-boundary points"),
                           ("monneau", "Monneau monitor traces at singular free-boundary points"),
                           ("classify", "classify every free-boundary point")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="run configuration file")
        if name != "solve":
            sp.add_argument("--solution", default=None, help=f"solution artifact (default OUTDIR/{SOLUTION_NAME})")
        if name in ("weiss", "monneau"):
            sp.add_argument("--points", default="all", help="'all' or 'nearest(x,y)' (default all)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
