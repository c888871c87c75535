"""Parallel-in-time preconditioners for the reduced normal equations.

The preconditioner replaces the first diagonal block ``C_hat + H`` of the
system by ``C_hat + l * L_hat`` so that it becomes the Kronecker sum

    P = I_t (x) C_hat + D_tt (x) L_hat,

with ``C_hat = nu^2 K^2 + B B^T`` and ``L_hat = (nu K + I/dt) / dt``.  The
time factor is diagonalized by DCT-VIII (``l=1``) or DST-I (``l=2``), which
leaves ``nt`` independent spatial systems ``C_hat + lam_k L_hat``.  These are
solved either by a second spatial diagonalization (``"recursive"``) or by
dense Cholesky factors (``"dense"``).
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .grid import BC, Grid, apply_B, apply_B_transpose, apply_K
from .transforms import TransformPlan, axis_plan, dtt_eigenvalues, time_plan

__all__ = [
    "StepSolver",
    "PrecondSpec",
    "RecursiveStep",
    "DenseStep",
    "PinTPreconditioner",
    "pint_apply",
    "apply_P",
    "step_solve_recursive",
    "step_solve_dense",
    "zero_visc_exact_solve",
    "spatial_symbol",
    "dense_step_matrix",
]

# Upper bound on spatial unknowns for the dense step solver.
MAX_DENSE_STEP = 4096
# Number of work items a phase is cut into; fixed so results do not depend on
# the worker count.
_CHUNKS = 16


class StepSolver(str, enum.Enum):
    RECURSIVE = "recursive"
    DENSE = "dense"


@dataclass(frozen=True)
class PrecondSpec:
    grid: Grid
    nu: float
    l: int = 1
    step_solver: StepSolver = StepSolver.RECURSIVE
    workers: int = 1

    def __post_init__(self):
        if self.l not in (1, 2):
            raise ValueError(f"l must be 1 or 2, got {self.l!r}")
        if self.nu < 0:
            raise ValueError("viscosity must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        object.__setattr__(self, "step_solver", StepSolver(self.step_solver))


def spatial_symbol(grid: Grid, x_plan=None, y_plan=None) -> np.ndarray:
    """Eigenvalues ``R`` of ``K`` in the tensor transform basis, shape ``(nx, ny)``."""
    bx, by = grid.bcs
    x_plan = x_plan or axis_plan(grid.nx, bx)
    y_plan = y_plan or axis_plan(grid.ny, by)
    return (x_plan.eigenvalues[:, None] / grid.dx**2
            + y_plan.eigenvalues[None, :] / grid.dy**2)


def _step_symbol(R, nu, lam, dt):
    return nu**2 * R * R + 2.0 * R + (nu * lam / dt) * R + lam / dt**2


class RecursiveStep:
    """Diagonal solve of ``C_hat + lam L_hat`` in the spatial transform basis.

    ``lam`` may be a scalar or an array of time eigenvalues; the symbol table
    then has one leading axis per eigenvalue.
    """

    def __init__(self, grid: Grid, nu: float, lam, x_plan=None, y_plan=None):
        bx, by = grid.bcs
        self.grid = grid
        self.nu = float(nu)
        self.lam = np.asarray(lam, dtype=float)
        self.x_plan = x_plan or axis_plan(grid.nx, bx)
        self.y_plan = y_plan or axis_plan(grid.ny, by)
        R = spatial_symbol(grid, self.x_plan, self.y_plan)
        lam_b = self.lam.reshape(self.lam.shape + (1, 1))
        S = _step_symbol(R, self.nu, lam_b, grid.dt)
        if not np.all(S > 0):
            raise ZeroDivisionError("step symbol has a nonpositive entry; time eigenvalue must be > 0")
        self.S = S
        self.inv_S = 1.0 / S

    def solve(self, y, index=slice(None)):
        """Solve for ``y`` of shape ``(..., nx, ny)``; ``index`` selects symbol rows."""
        Y = self.y_plan.forward(y, axis=-1)
        Y = self.x_plan.forward(Y, axis=-2)
        Y *= self.inv_S[index]
        Y = self.x_plan.inverse(Y, axis=-2)
        return self.y_plan.inverse(Y, axis=-1)


def _dense_K(grid):
    n = grid.nx * grid.ny
    eye = np.eye(n).reshape((n,) + grid.spatial_shape)
    return apply_K(grid, eye).reshape(n, n).T


def _dense_BBt(grid):
    n = grid.nx * grid.ny
    eye = np.eye(n).reshape((n,) + grid.spatial_shape)
    return apply_B(grid, apply_B_transpose(grid, eye)).reshape(n, n).T


def dense_step_matrix(grid: Grid, nu: float, lam: float) -> np.ndarray:
    """Assemble ``nu^2 K^2 + B B^T + lam (nu K + I/dt)/dt`` densely."""
    n = grid.nx * grid.ny
    K = _dense_K(grid)
    C_hat = nu**2 * (K @ K) + _dense_BBt(grid)
    L_hat = (nu * K + np.eye(n) / grid.dt) / grid.dt
    return C_hat + lam * L_hat


class DenseStep:
    """Cholesky factors of the assembled step matrices, one per eigenvalue."""

    def __init__(self, grid: Grid, nu: float, lam):
        n = grid.nx * grid.ny
        if n > MAX_DENSE_STEP:
            raise ValueError(f"dense step solver limited to {MAX_DENSE_STEP} spatial unknowns")
        self.grid = grid
        self.nu = float(nu)
        self.lam = np.atleast_1d(np.asarray(lam, dtype=float))
        self._scalar = np.ndim(lam) == 0
        K = _dense_K(grid)
        C_hat = nu**2 * (K @ K) + _dense_BBt(grid)
        L_hat = (nu * K + np.eye(n) / grid.dt) / grid.dt
        self.factors = []
        for lam_k in self.lam:
            try:
                self.factors.append(sla.cho_factor(C_hat + lam_k * L_hat, lower=True))
            except sla.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"step matrix for lambda={lam_k} is singular") from exc

    def solve(self, y, index=slice(None)):
        n = self.grid.nx * self.grid.ny
        y = np.asarray(y, dtype=float)
        if self._scalar and y.shape == self.grid.spatial_shape:
            return sla.cho_solve(self.factors[0], y.ravel()).reshape(y.shape)
        ks = range(len(self.factors))[index]
        out = np.empty_like(y)
        for pos, k in enumerate(ks):
            out[pos] = sla.cho_solve(self.factors[k], y[pos].reshape(n)).reshape(self.grid.spatial_shape)
        return out


def step_solve_recursive(system: RecursiveStep, y_k):
    """Inverse action of one step matrix via spatial transforms."""
    y = np.asarray(y_k, dtype=float)
    flat = y.ndim == 1
    y = system.grid.check(y, system.grid.spatial_shape)
    x = system.solve(y)
    return x.ravel() if flat else x


def step_solve_dense(system: DenseStep, y_k):
    y = np.asarray(y_k, dtype=float)
    flat = y.ndim == 1
    x = system.solve(system.grid.check(y, system.grid.spatial_shape))
    return x.ravel() if flat else x


def _chunks(n, count=_CHUNKS):
    bounds = np.linspace(0, n, min(n, count) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class PinTPreconditioner:
    """Inverse action of the block-diagonalizable preconditioner.

    Work is split into a fixed set of chunks (independent of ``workers``):
    spatial column blocks for the time transforms and time-step blocks for
    the step solves.  ``elapsed`` accumulates wall time spent in
    :meth:`apply`.
    """

    def __init__(self, spec: PrecondSpec, time_method: str = "auto"):
        self.spec = spec
        grid = spec.grid
        self.grid = grid
        self.time_plan: TransformPlan = time_plan(grid.nt, spec.l, time_method)
        self.lam_t = dtt_eigenvalues(grid.nt, spec.l)
        if spec.step_solver is StepSolver.RECURSIVE:
            self.steps = RecursiveStep(grid, spec.nu, self.lam_t)
        else:
            self.steps = DenseStep(grid, spec.nu, self.lam_t)
        self._time_chunks = _chunks(grid.nx * grid.ny)
        self._step_chunks = _chunks(grid.nt)
        self._pool = ThreadPoolExecutor(spec.workers) if spec.workers > 1 else None
        self.elapsed = 0.0
        self.applications = 0

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _map(self, fn, items):
        if self._pool is None:
            for it in items:
                fn(it)
        else:
            list(self._pool.map(fn, items))

    def apply(self, y):
        t0 = time.perf_counter()
        grid = self.grid
        flat = np.ndim(y) == 1
        y = grid.check(y, grid.shape)
        nt = grid.nt
        ns = grid.nx * grid.ny
        plan = self.time_plan
        y2 = y.reshape(nt, ns)
        Y = np.empty((nt, ns))
        X = np.empty((nt, ns))
        out = np.empty((nt, ns))

        def time_fwd(sl):
            Y[:, sl] = plan.forward(y2[:, sl], axis=0)

        def steps(sl):
            blk = Y[sl].reshape((sl.stop - sl.start,) + grid.spatial_shape)
            X[sl] = self.steps.solve(blk, sl).reshape(sl.stop - sl.start, ns)

        def time_inv(sl):
            out[:, sl] = plan.inverse(X[:, sl], axis=0)

        self._map(time_fwd, self._time_chunks)
        self._map(steps, self._step_chunks)
        self._map(time_inv, self._time_chunks)
        self.elapsed += time.perf_counter() - t0
        self.applications += 1
        out = out.reshape(grid.shape)
        return out.ravel() if flat else out

    __call__ = apply


def pint_apply(spec: PrecondSpec, y):
    """One-off application of the inverse preconditioner (builds the plans)."""
    with PinTPreconditioner(spec) as prec:
        return prec.apply(y)


def apply_P(grid: Grid, nu: float, l: int, x):
    """Forward action ``P x`` of the preconditioner, matrix-free."""
    flat = np.ndim(x) == 1
    x = grid.check(x, grid.shape)
    dt = grid.dt
    Kx = apply_K(grid, x)
    C_hat = nu**2 * apply_K(grid, Kx) + apply_B(grid, apply_B_transpose(grid, x))
    L_hat = (nu * Kx + x / dt) / dt
    y = C_hat + 2.0 * L_hat
    y[0] -= (2 - l) * L_hat[0]
    y[1:] -= L_hat[:-1]
    y[:-1] -= L_hat[1:]
    return y.ravel() if flat else y


def zero_visc_exact_solve(grid: Grid, b, nu: float = 0.0):
    """Direct solve of the inviscid reduced system by a 3D transform.

    Time is diagonalized by DCT-VIII and space by the axis transforms of the
    boundary conditions; the symbol is ``lam_t / dt^2 + 2 R``.
    """
    if nu != 0:
        raise ValueError("zero_visc_exact_solve requires nu == 0")
    flat = np.ndim(b) == 1
    b = grid.check(b, grid.shape)
    bx, by = grid.bcs
    tp = TransformPlan("dct8", grid.nt, "fast")
    xp = axis_plan(grid.nx, bx)
    yp = axis_plan(grid.ny, by)
    R = spatial_symbol(grid, xp, yp)
    sym = tp.eigenvalues[:, None, None] / grid.dt**2 + 2.0 * R[None]
    Z = yp.forward(xp.forward(tp.forward(b, axis=0), axis=1), axis=2)
    Z /= sym
    z = tp.inverse(xp.inverse(yp.inverse(Z, axis=2), axis=1), axis=0)
    return z.ravel() if flat else z
