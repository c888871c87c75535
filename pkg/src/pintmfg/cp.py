"""Accelerated Chambolle-Pock iteration for the discrete variational MFG."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, PrimalState, apply_bigA
from .krylov import CgReport, cg_tolerance, pcg
from .precond import PinTPreconditioner, PrecondSpec, StepSolver
from .problems import Problem
from .prox import prox_dual, prox_primal

__all__ = [
    "CpOptions",
    "SolveStats",
    "CpResult",
    "InnerSolveError",
    "run_cp",
    "update_steps",
    "stopping_residual",
    "default_cp_tol",
]

log = logging.getLogger(__name__)


class InnerSolveError(RuntimeError):
    """The preconditioned inner solve failed during a CP iteration."""


def default_cp_tol(grid: Grid) -> float:
    return grid.dx * grid.dy * grid.dt / 5.0


@dataclass
class CpOptions:
    gamma: float = 0.5
    cp_tol: float | None = None
    max_iter: int = 5000
    tau0: float = 1.0
    sigma0: float = 1.0
    l: int = 1
    step_solver: StepSolver = StepSolver.RECURSIVE
    workers: int = 1
    cg_max_iter: int | None = None
    # raise when CG hits its cap instead of continuing with the last iterate
    strict_cg: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.tau0 <= 0 or self.sigma0 <= 0 or self.tau0 * self.sigma0 > 1:
            raise ValueError("need tau0, sigma0 > 0 with tau0 * sigma0 <= 1")


@dataclass
class SolveStats:
    r: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    cg_tol: list = field(default_factory=list)
    cg_residual: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    t_dual: list = field(default_factory=list)
    t_primal: list = field(default_factory=list)
    t_precond: list = field(default_factory=list)

    def append(self, **row):
        for k, v in row.items():
            getattr(self, k).append(v)

    def __len__(self):
        return len(self.r)

    @property
    def avg_cg(self) -> float:
        return float(np.mean(self.cg_iterations)) if self.cg_iterations else 0.0

    def row(self, i: int) -> dict:
        return {
            "iter": i + 1 if i >= 0 else len(self) + i + 1,
            "r": self.r[i], "cg_iters": self.cg_iterations[i],
            "tau": self.tau[i], "sigma": self.sigma[i], "theta": self.theta[i],
            "t_dual": self.t_dual[i], "t_primal": self.t_primal[i],
        }

    def rows(self):
        for i in range(len(self)):
            yield self.row(i)


@dataclass
class CpResult:
    """Outcome of :func:`run_cp`.

    ``state`` is the last primal prox output (``m >= 0``, ``w`` in the cone).
    ``feasible`` is the projection of the last dual-prox argument onto the
    constraint set, which satisfies the constraint up to the final CG
    tolerance.
    """

    state: PrimalState
    feasible: PrimalState
    dual: PrimalState
    stats: SolveStats
    converged: bool
    final_cg_tol: float
    wall_time: float

    @property
    def iterations(self) -> int:
        return len(self.stats)


def update_steps(gamma: float, tau: float, sigma: float):
    """Acceleration rule: ``theta = 1/sqrt(1 + 2 gamma tau)``, ``tau *= theta``, ``sigma /= theta``."""
    theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
    return theta, theta * tau, sigma / theta


def stopping_residual(m_new, m_old, grid: Grid) -> float:
    return math.sqrt(grid.dx * grid.dy * grid.dt) * float(np.linalg.norm(np.ravel(m_new - m_old)))


def run_cp(problem: Problem, options: CpOptions | None = None, callback=None,
           precond: PinTPreconditioner | None = None) -> CpResult:
    """Solve ``problem`` with accelerated Chambolle-Pock.

    ``callback(iteration, row_dict)`` is called after every iteration.
    Starts from ``m`` replicated from ``m0``, ``w = 0``, ``x = 0``.
    """
    opts = options or CpOptions(gamma=problem.gamma)
    grid, nu = problem.grid, problem.nu
    cp_tol = default_cp_tol(grid) if opts.cp_tol is None else opts.cp_tol
    own_precond = precond is None
    if own_precond:
        precond = PinTPreconditioner(PrecondSpec(grid, nu, opts.l, opts.step_solver, opts.workers))
    cg_max = opts.cg_max_iter or 10 * grid.size

    def matvec(v):
        return apply_bigA(grid, nu, v)

    current_tol = 1e-2
    reports: list[CgReport] = []

    def solve(rhs):
        z, rep = pcg(matvec, precond.apply, rhs, current_tol, cg_max)
        if not rep.converged:
            if opts.strict_cg:
                raise InnerSolveError(f"CG did not reach tol {current_tol:g} in {cg_max} iterations")
            log.warning("CG stopped at relative residual %.3e (tol %.1e)",
                        rep.final_relative_residual, current_tol)
        reports.append(rep)
        return z, rep

    m0 = np.asarray(problem.m0, dtype=float)
    y = PrimalState(np.broadcast_to(m0, grid.shape).copy(), np.zeros(grid.momentum_shape))
    y_bar = y.copy()
    x = PrimalState.zeros(grid)
    feasible = y.copy()
    tau, sigma = opts.tau0, opts.sigma0
    stats = SolveStats()
    converged = False
    t_start = time.perf_counter()
    try:
        for it in range(1, opts.max_iter + 1):
            t0 = time.perf_counter()
            p0 = precond.elapsed
            v = x + sigma * y_bar
            try:
                x_new, rep = prox_dual(grid, nu, v, sigma, m0, solve)
            except (np.linalg.LinAlgError, FloatingPointError, InnerSolveError) as exc:
                raise InnerSolveError(f"inner solve failed at CP iteration {it}: {exc}") from exc
            t1 = time.perf_counter()
            y_new = PrimalState(*prox_primal(y.m - tau * x_new.m, y.w - tau * x_new.w,
                                             tau, problem.cost, grid.dt))
            t2 = time.perf_counter()
            r = stopping_residual(y_new.m, y.m, grid)
            theta, tau_next, sigma_next = update_steps(opts.gamma, tau, sigma)
            y_bar = y_new + theta * (y_new - y)
            feasible = (v - x_new) * (1.0 / sigma)
            stats.append(r=r, cg_iterations=rep.iterations, cg_tol=current_tol,
                         cg_residual=rep.final_relative_residual, tau=tau, sigma=sigma,
                         theta=theta, t_dual=t1 - t0, t_primal=t2 - t1,
                         t_precond=precond.elapsed - p0)
            if callback is not None:
                callback(it, stats.row(-1))
            x, y = x_new, y_new
            tau, sigma = tau_next, sigma_next
            final_tol = current_tol
            current_tol = cg_tolerance(r)
            if r <= cp_tol:
                converged = True
                break
    finally:
        if own_precond:
            precond.close()
    return CpResult(y, feasible, x, stats, converged, final_tol, time.perf_counter() - t_start)
