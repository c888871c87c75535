"""Test problems and JSON run configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .grid import BC, Grid
from .precond import StepSolver
from .prox import CellCost, Coupling

__all__ = [
    "Problem",
    "ProblemConfig",
    "ConfigError",
    "problem1_cost",
    "problem1",
    "problem2_setup",
    "problem2",
    "trivial_problem",
    "load_config",
    "parse_config",
    "build_problem",
]

PROBLEM_KINDS = ("1", "2", "trivial")


class ConfigError(ValueError):
    pass


@dataclass
class Problem:
    """A fully specified discrete variational MFG."""

    name: str
    grid: Grid
    nu: float
    m0: np.ndarray
    cost: CellCost
    gamma: float
    target: np.ndarray | None = None


def problem1_cost(x, y, m):
    """Crowd-aversion running cost ``(m^2 - sin 2pi y - sin 2pi x - cos 4pi x) / 2``."""
    return 0.5 * (m * m - np.sin(2 * np.pi * y) - np.sin(2 * np.pi * x) - np.cos(4 * np.pi * x))


def problem1(nx: int, nt: int | None = None, nu: float = 0.01, ny: int | None = None,
             gamma: float = 0.5, T: float = 1.0) -> Problem:
    """Periodic crowd aversion on the unit torus with ``m0 = 1`` and ``g = 0``."""
    ny = ny or nx
    nt = nt or 8 * nx
    grid = Grid(nx, ny, nt, BC.PERIODIC, (0.0, 1.0, 0.0, 1.0), T)
    X, Y = grid.nodes()
    offset = problem1_cost(X, Y, 0.0)
    cost = CellCost(Coupling(curvature=0.5, offset=offset))
    return Problem("problem1", grid, nu, np.ones(grid.spatial_shape), cost, gamma)


def _gaussian(X, Y, cx, cy):
    return 3.0 * np.exp(-2.0**7 * ((X - cx) ** 2 + (Y - cy) ** 2))


def problem2_setup(beta: float, grid: Grid):
    """Initial density, target density and terminal coupling ``(m - mbar)/beta``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    X, Y = grid.nodes()
    m0 = _gaussian(X, Y, -0.25, 0.25)
    mbar = _gaussian(X, Y, 0.25, -0.25)
    terminal = Coupling(slope=1.0 / beta, offset=-mbar / beta)
    return m0, mbar, terminal


def problem2(nx: int, nt: int | None = None, nu: float = 0.01, ny: int | None = None,
             gamma: float = 0.05, beta_dt: float = 1e-5, T: float = 1.0) -> Problem:
    """Neumann problem on ``[-1/2, 1/2]^2`` steering a Gaussian to a target."""
    ny = ny or nx
    nt = nt or 8 * nx
    grid = Grid(nx, ny, nt, BC.NEUMANN, (-0.5, 0.5, -0.5, 0.5), T)
    m0, mbar, terminal = problem2_setup(beta_dt / grid.dt, grid)
    return Problem("problem2", grid, nu, m0, CellCost(Coupling(), terminal), gamma, mbar)


def trivial_problem(bc, nx: int = 8, nt: int | None = None, nu: float = 0.1,
                    gamma: float = 0.5) -> Problem:
    """Zero couplings with uniform initial density; the optimum is ``m = 1``, ``w = 0``."""
    nt = nt or 8 * nx
    grid = Grid(nx, nx, nt, BC(bc), (0.0, 1.0, 0.0, 1.0), 1.0)
    return Problem("trivial", grid, nu, np.ones(grid.spatial_shape), CellCost(), gamma)


@dataclass
class ProblemConfig:
    problem: str
    bc: BC
    nx: int
    ny: int
    nt: int
    nu: float
    gamma: float
    cp_tol: float | None = None
    beta_dt: float = 1e-5
    T: float = 1.0
    l: int = 1
    step_solver: StepSolver = StepSolver.RECURSIVE
    threads: int = 1
    output_dir: str = "out"
    max_cp_iters: int = 5000
    snapshots: tuple[float, ...] = (0.0, 0.1, 0.5, 1.0)
    spectrum_nu: tuple[float, ...] = (1.0, 0.1, 0.01, 0.001)
    spectrum_l: tuple[int, ...] = (1, 2)
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "raw":
                continue
            v = getattr(self, f.name)
            if isinstance(v, (BC, StepSolver)):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_TOP_KEYS = {"problem", "bc", "nx", "ny", "nt", "T", "nu", "gamma", "cp_tol", "beta_dt",
             "precond", "threads", "output_dir", "max_cp_iters", "snapshots", "spectrum"}
_PRECOND_KEYS = {"l", "step_solver"}
_SPECTRUM_KEYS = {"nu", "l"}


def _positive_int(data, key, default=None):
    v = data.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{key} must be a positive integer, got {v!r}")
    return v


def _number(data, key, default, lo=None, strict=False):
    v = data.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (strict and v == lo)):
        raise ConfigError(f"{key} must be {'>' if strict else '>='} {lo}, got {v}")
    return v


def parse_config(data: dict) -> ProblemConfig:
    """Validate a config mapping and apply defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "problem" not in data:
        raise ConfigError("missing required key 'problem'")
    problem = str(data["problem"]).lower()
    if problem not in PROBLEM_KINDS:
        raise ConfigError(f"problem must be one of {PROBLEM_KINDS}, got {data['problem']!r}")

    default_bc = {"1": "periodic", "2": "neumann", "trivial": "periodic"}[problem]
    try:
        bc = BC(str(data.get("bc", default_bc)).lower())
    except ValueError:
        raise ConfigError(f"bc must be 'periodic' or 'neumann', got {data.get('bc')!r}") from None
    if problem == "1" and bc is not BC.PERIODIC:
        raise ConfigError("problem 1 is periodic; bc must be 'periodic'")
    if problem == "2" and bc is not BC.NEUMANN:
        raise ConfigError("problem 2 requires bc 'neumann'")

    nx = _positive_int(data, "nx")
    if nx is None:
        raise ConfigError("missing required key 'nx'")
    ny = _positive_int(data, "ny", nx)
    nt = _positive_int(data, "nt", 8 * nx)

    default_gamma = 0.05 if problem == "2" else 0.5
    nu = _number(data, "nu", 0.01, lo=0.0)
    gamma = _number(data, "gamma", default_gamma, lo=0.0)
    cp_tol = _number(data, "cp_tol", None, lo=0.0)
    beta_dt = _number(data, "beta_dt", 1e-5, lo=0.0, strict=True)
    T = _number(data, "T", 1.0, lo=0.0, strict=True)

    pre = data.get("precond", {})
    if not isinstance(pre, dict):
        raise ConfigError("precond must be an object")
    if set(pre) - _PRECOND_KEYS:
        raise ConfigError(f"unknown precond keys: {sorted(set(pre) - _PRECOND_KEYS)}")
    l = pre.get("l", 1)
    if l not in (1, 2) or isinstance(l, bool):
        raise ConfigError(f"precond.l must be 1 or 2, got {l!r}")
    try:
        step_solver = StepSolver(str(pre.get("step_solver", "recursive")).lower())
    except ValueError:
        raise ConfigError("precond.step_solver must be 'recursive' or 'dense'") from None

    threads = _positive_int(data, "threads", 1)
    max_cp_iters = _positive_int(data, "max_cp_iters", 5000)
    output_dir = str(data.get("output_dir", "out"))

    snaps = data.get("snapshots", [0.0, 0.1, 0.5, 1.0])
    if not isinstance(snaps, list) or not all(
            isinstance(s, (int, float)) and not isinstance(s, bool) and 0 <= s <= 1 for s in snaps):
        raise ConfigError("snapshots must be a list of time fractions in [0, 1]")

    spec = data.get("spectrum", {})
    if not isinstance(spec, dict) or set(spec) - _SPECTRUM_KEYS:
        raise ConfigError("spectrum must be an object with keys 'nu' and 'l'")
    s_nu = spec.get("nu", [1.0, 0.1, 0.01, 0.001])
    s_l = spec.get("l", [1, 2])
    if not isinstance(s_nu, list) or not all(isinstance(v, (int, float)) and v >= 0 for v in s_nu):
        raise ConfigError("spectrum.nu must be a list of nonnegative numbers")
    if not isinstance(s_l, list) or not all(v in (1, 2) for v in s_l):
        raise ConfigError("spectrum.l must be a list drawn from {1, 2}")

    return ProblemConfig(
        problem=problem, bc=bc, nx=nx, ny=ny, nt=nt, nu=nu, gamma=gamma, cp_tol=cp_tol,
        beta_dt=beta_dt, T=T, l=l, step_solver=step_solver, threads=threads,
        output_dir=output_dir, max_cp_iters=max_cp_iters,
        snapshots=tuple(float(s) for s in snaps),
        spectrum_nu=tuple(float(v) for v in s_nu), spectrum_l=tuple(int(v) for v in s_l),
        raw=dict(data),
    )


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(data)


def build_problem(cfg: ProblemConfig, **overrides) -> Problem:
    """Instantiate the problem a config describes (``overrides`` patch the config)."""
    if overrides:
        cfg = replace(cfg, **overrides)
    if cfg.problem == "1":
        return problem1(cfg.nx, cfg.nt, cfg.nu, cfg.ny, cfg.gamma, cfg.T)
    if cfg.problem == "2":
        return problem2(cfg.nx, cfg.nt, cfg.nu, cfg.ny, cfg.gamma, cfg.beta_dt, cfg.T)
    grid = Grid(cfg.nx, cfg.ny, cfg.nt, cfg.bc, (0.0, 1.0, 0.0, 1.0), cfg.T)
    return Problem("trivial", grid, cfg.nu, np.ones(grid.spatial_shape), CellCost(), cfg.gamma)
