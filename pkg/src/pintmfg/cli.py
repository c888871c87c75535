"""Command-line entry point: ``solve``, ``spectrum`` and ``bench``.

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    mass_audit,
    preconditioned_spectrum,
    write_eigenvalues_csv,
)
from .cp import CpOptions, InnerSolveError, default_cp_tol, run_cp
from .grid import Grid
from .krylov import NonFiniteError
from .problems import ConfigError, build_problem, load_config
from .prox import RootFindingError

__all__ = ["main", "build_parser", "STATS_COLUMNS", "SCALING_COLUMNS", "snapshot_name",
           "snapshot_level", "read_stats_csv", "read_grid_csv"]

log = logging.getLogger("pintmfg")

STATS_COLUMNS = ("iter", "r", "cg_iters", "tau", "sigma", "theta", "t_dual", "t_primal")
SCALING_COLUMNS = ("mode", "threads", "problem_size", "nt", "wall_time", "precond_time",
                   "speedup", "precond_speedup")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
SOLVER_ERRORS = (InnerSolveError, RootFindingError, NonFiniteError, np.linalg.LinAlgError,
                 FloatingPointError, ZeroDivisionError)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_csv(path, columns, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return Path(path)


def read_stats_csv(path) -> dict:
    """Parse ``stats.csv`` back into column arrays."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for c in STATS_COLUMNS:
        conv = int if c in ("iter", "cg_iters") else float
        out[c] = np.array([conv(r[c]) for r in rows])
    return out


def read_grid_csv(path) -> np.ndarray:
    """Read an ``ny x nx`` snapshot grid."""
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def snapshot_level(grid: Grid, frac: float) -> int:
    """Density time level (0..nt) nearest to ``frac * T``."""
    return int(round(frac * grid.nt))


def snapshot_name(frac: float) -> str:
    return f"m_t{frac:g}.csv"


def _density_at(result, problem, level):
    if level == 0:
        return np.asarray(problem.m0, dtype=float)
    return result.state.m[level - 1]


def _parse_fracs(text):
    try:
        fracs = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad --snapshots value {text!r}") from None
    if not fracs or any(not 0.0 <= f <= 1.0 for f in fracs):
        raise ConfigError("--snapshots must be comma-separated fractions in [0, 1]")
    return fracs


def _parse_threads(text):
    try:
        th = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad --threads value {text!r}") from None
    if not th or any(t < 1 for t in th):
        raise ConfigError("--threads must list positive integers")
    return th


def _write_manifest(out, cfg, started, files, **extra):
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "threads": cfg.threads,
        "wall_time": time.perf_counter() - started,
        "files": sorted(str(Path(f).name) for f in files),
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=float))
    return path


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.threads is not None:
        cfg = replace(cfg, threads=_parse_threads(args.threads)[0])
    if args.snapshots is not None:
        cfg = replace(cfg, snapshots=_parse_fracs(args.snapshots))
    if args.max_iters is not None:
        cfg = replace(cfg, max_cp_iters=args.max_iters)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    problem = build_problem(cfg)
    opts = CpOptions(gamma=cfg.gamma, cp_tol=cfg.cp_tol, max_iter=cfg.max_cp_iters, l=cfg.l,
                     step_solver=cfg.step_solver, workers=cfg.threads)
    cp_tol = default_cp_tol(problem.grid) if cfg.cp_tol is None else cfg.cp_tol
    rows = []

    def progress(it, row):
        rows.append(row)
        if args.verbose and (it == 1 or it % 10 == 0):
            log.info("iter %d  r=%.3e  cg=%d", it, row["r"], row["cg_iters"])

    try:
        result = run_cp(problem, opts, callback=progress)
    except SOLVER_ERRORS as exc:
        files = [_write_csv(out / "stats.csv", STATS_COLUMNS, rows)]
        files.append(_write_manifest(out, cfg, started, files, partial=True, converged=False,
                                     iterations=len(rows), error=str(exc)))
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    files = [_write_csv(out / "stats.csv", STATS_COLUMNS, result.stats.rows())]
    snaps = {}
    for frac in cfg.snapshots:
        m = _density_at(result, problem, snapshot_level(problem.grid, frac))
        snaps[frac] = m
        path = out / snapshot_name(frac)
        np.savetxt(path, m.T, delimiter=",", fmt="%.17g")
        files.append(path)

    from .plotting import plot_convergence, plot_snapshots
    files.append(plot_convergence(out / "convergence.png", result.stats, cp_tol))
    if snaps:
        files.append(plot_snapshots(out / "snapshots.png", problem.grid, snaps))

    audit = mass_audit(result.feasible.m, problem.m0)
    files.append(_write_manifest(
        out, cfg, started, files, partial=False, converged=result.converged,
        iterations=result.iterations, avg_cg=result.stats.avg_cg, cp_tol=cp_tol,
        final_cg_tol=result.final_cg_tol, solve_time=result.wall_time,
        mass_max_deviation=audit.max_deviation))
    print(f"{'converged' if result.converged else 'stopped'} after {result.iterations} CP "
          f"iterations, avg CG {result.stats.avg_cg:.2f}, {result.wall_time:.2f} s -> {out}")
    if not result.converged:
        print(f"error: no convergence within {cfg.max_cp_iters} iterations", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    grid = build_problem(cfg).grid
    files, summary, nonunity = [], [], {}
    for nu in cfg.spectrum_nu:
        for l in cfg.spectrum_l:
            rep = preconditioned_spectrum(grid, nu, l)
            files.append(write_eigenvalues_csv(out / f"eigenvalues_nu{nu:g}_l{l}.csv", rep.eigenvalues))
            files.append(write_eigenvalues_csv(out / f"nonunity_nu{nu:g}_l{l}.csv", rep.nonunity))
            nonunity[(nu, l)] = rep.nonunity
            summary.append({"nu": nu, "l": l, "size": rep.eigenvalues.size,
                            "unity_count": rep.unity_count, "bound": rep.bound,
                            "max_deviation": rep.max_deviation})
            print(f"nu={nu:g} l={l}: {rep.unity_count} unit eigenvalues "
                  f"(bound {rep.bound}), max |lambda-1| = {rep.max_deviation:.3e}")
    files.append(_write_csv(out / "spectrum_summary.csv",
                            ("nu", "l", "size", "unity_count", "bound", "max_deviation"), summary))
    from .plotting import plot_spectrum
    files.append(plot_spectrum(out / "spectrum.png", nonunity))
    files.append(_write_manifest(out, cfg, started, files, partial=False))
    return EXIT_OK


def _timed_run(problem, cfg, iters, workers):
    opts = CpOptions(gamma=cfg.gamma, cp_tol=0.0, max_iter=iters, l=cfg.l,
                     step_solver=cfg.step_solver, workers=workers)
    result = run_cp(problem, opts)
    return result.wall_time, float(np.sum(result.stats.t_precond))


def cmd_bench(args) -> int:
    from threadpoolctl import threadpool_limits

    cfg = load_config(args.config)
    threads = _parse_threads(args.threads or "1,2,4,8")
    if threads[0] != 1:
        threads = [1] + [t for t in threads if t != 1]
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    modes = ("strong", "weak") if args.mode == "both" else (args.mode,)
    rows = []
    # BLAS stays single-threaded so the preconditioner's worker pool is the only parallelism
    with threadpool_limits(1):
        for mode in modes:
            base = None
            for t in threads:
                nt = cfg.nt * t if mode == "weak" else cfg.nt
                problem = build_problem(cfg, nt=nt)
                wall, pre = _timed_run(problem, cfg, args.cp_iters, t)
                if base is None:
                    base = (wall, pre)
                rows.append({"mode": mode, "threads": t, "problem_size": problem.grid.size,
                             "nt": nt, "wall_time": wall, "precond_time": pre,
                             "speedup": base[0] / wall, "precond_speedup": base[1] / pre})
                print(f"{mode:6s} threads={t:2d} size={problem.grid.size:8d} "
                      f"wall={wall:8.2f}s precond={pre:8.2f}s")
    files = [_write_csv(out / "scaling.csv", SCALING_COLUMNS, rows)]
    from .plotting import plot_scaling
    files.append(plot_scaling(out / "scaling.png", rows))
    files.append(_write_manifest(out, cfg, started, files, partial=False, cp_iters=args.cp_iters,
                                 thread_list=threads))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pintmfg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("solve", help="run Chambolle-Pock and write stats and snapshots")
    common(p)
    p.add_argument("--threads", help="worker threads for the preconditioner")
    p.add_argument("--snapshots", help='time fractions, e.g. "0,0.1,0.5,1"')
    p.add_argument("--max-iters", type=int, help="cap on CP iterations")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("spectrum", help="dense spectra of the preconditioned system")
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bench", help="strong and weak thread scaling")
    common(p)
    p.add_argument("--threads", help='thread counts, e.g. "1,2,4,8"')
    p.add_argument("--cp-iters", type=int, default=100, help="fixed CP iteration budget")
    p.add_argument("--mode", choices=("strong", "weak", "both"), default="both")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
