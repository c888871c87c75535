"""Proximal operators of the primal objective and of the constraint indicator.

Quadratic Hamiltonian only (``q = q' = 2``), so the kinetic term is
``|w|^2 / (2 m)`` on ``m > 0, w in K``.  For fixed ``m`` the minimizing
momentum is ``P_K(w~) m / (m + tau)``, which leaves a scalar monotone equation
in ``m`` per cell:

    (m - m~)/tau + f(m) [+ g(m)/dt] - |P_K(w~)|^2 / (2 (m + tau)^2) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .grid import (
    Grid,
    PrimalState,
    apply_constraint_full,
    apply_constraint_full_transpose,
    expand_solution,
    project_cone,
    reduce_rhs,
)

__all__ = [
    "Coupling",
    "CellCost",
    "RootFindingError",
    "prox_primal",
    "prox_primal_pointwise",
    "prox_objective",
    "prox_dual",
    "project_constraint",
]


class RootFindingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Coupling:
    """Local coupling ``c(x, m) = slope * m + curvature * m**2 + offset(x)``.

    Nondecreasing in ``m >= 0`` whenever ``slope, curvature >= 0``.  ``offset``
    is a scalar or an array broadcastable to the field it is evaluated on.
    """

    slope: float = 0.0
    curvature: float = 0.0
    offset: np.ndarray | float = 0.0

    def __post_init__(self):
        if self.slope < 0 or self.curvature < 0:
            raise ValueError("coupling must be nondecreasing in m")

    def value(self, m):
        return self.slope * m + self.curvature * m * m + self.offset

    def derivative(self, m):
        return self.slope + 2.0 * self.curvature * m

    def primitive(self, m):
        """``int_0^m c(x, s) ds``."""
        return 0.5 * self.slope * m * m + self.curvature * m**3 / 3.0 + self.offset * m

    def at(self, index):
        """Restrict a field-valued offset to ``index``."""
        off = np.asarray(self.offset)
        return Coupling(self.slope, self.curvature, off[index] if off.ndim else self.offset)

    @property
    def is_zero(self):
        return self.slope == 0 and self.curvature == 0 and not np.any(self.offset)


@dataclass(frozen=True)
class CellCost:
    """Running coupling ``f`` and optional terminal coupling ``g``.

    The terminal primitive enters the objective with weight ``1/dt``.
    """

    running: Coupling = Coupling()
    terminal: Coupling | None = None


def _bracket_hi(m_tilde, tau, f0, g0, p2):
    return m_tilde + tau * (np.abs(f0) + np.abs(g0) + p2 / (2.0 * tau**2)) + 1.0


@numba.njit(cache=True)
def _density_kernel(mt, pp, tau, a1, a2, off, b1, b2, boff, inv_dt, tol, max_iter, out):
    # phi(m) = (m - mt)/tau + a1 m + a2 m^2 + off + inv_dt (b1 m + b2 m^2 + boff)
    #          - pp / (2 (m + tau)^2), strictly increasing on m >= 0
    n = mt.shape[0]
    failed = 0
    for i in range(n):
        c0 = off[i] + inv_dt * boff[i]
        c1 = a1 + inv_dt * b1
        c2 = a2 + inv_dt * b2
        p2 = pp[i]
        phi0 = -mt[i] / tau + c0 - p2 / (2.0 * tau * tau)
        if phi0 >= 0.0:
            out[i] = 0.0
            continue
        lo = 0.0
        hi = mt[i] + tau * (abs(off[i]) + abs(inv_dt * boff[i]) + p2 / (2.0 * tau * tau)) + 1.0
        m = mt[i]
        if m <= lo or m >= hi:
            m = 0.5 * hi
        converged = False
        for _ in range(max_iter):
            s = m + tau
            val = (m - mt[i]) / tau + c1 * m + c2 * m * m + c0 - p2 / (2.0 * s * s)
            if val == 0.0:
                converged = True
                break
            if val < 0.0:
                lo = m
            else:
                hi = m
            d = 1.0 / tau + c1 + 2.0 * c2 * m + p2 / (s * s * s)
            cand = m - val / d
            if not (cand > lo and cand < hi):
                cand = 0.5 * (lo + hi)
            step = abs(cand - m)
            m = cand
            if step <= tol or hi - lo <= tol:
                converged = True
                break
        if not converged:
            failed += 1
        out[i] = m
    return failed


def _solve_density(m_tilde, p2, tau, running, terminal, dt, tol=1e-12, max_iter=200):
    """Safeguarded Newton (bisection fallback) for the density equation, per cell.

    Returns ``m = 0`` wherever the equation is already nonnegative at ``0+``.
    """
    inv_dt = 0.0 if terminal is None else 1.0 / dt
    term = terminal if terminal is not None else Coupling()
    shape = np.broadcast(m_tilde, p2, running.offset, term.offset).shape

    def flat(a):
        return np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), shape).ravel())

    out = np.empty(int(np.prod(shape)))
    failed = _density_kernel(flat(m_tilde), flat(p2), float(tau),
                             float(running.slope), float(running.curvature), flat(running.offset),
                             float(term.slope), float(term.curvature), flat(term.offset),
                             inv_dt, tol, max_iter, out)
    if failed:
        raise RootFindingError(f"density equation did not converge in {failed} cells")
    return out.reshape(shape)


def prox_primal(m_tilde, w_tilde, tau, cost: CellCost, dt: float):
    """Prox of ``tau * (B + F)`` on whole fields.

    ``m_tilde`` has shape ``(nt, ...)`` and ``w_tilde`` shape ``(nt, 4, ...)``;
    density level ``k+1`` is paired with momentum level ``k`` (same array
    index).  The terminal coupling acts on the last density level.
    """
    m_tilde = np.asarray(m_tilde, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    if tau <= 0:
        raise ValueError("tau must be positive")
    pw = project_cone(w_tilde, axis=1)
    p2 = np.sum(pw * pw, axis=1)
    m = np.empty_like(m_tilde)
    m[:-1] = _solve_density(m_tilde[:-1], p2[:-1], tau, cost.running, None, dt)
    m[-1] = _solve_density(m_tilde[-1], p2[-1], tau, cost.running, cost.terminal, dt)
    scale = m / (m + tau)
    w = pw * scale[:, None]
    return m, w


def prox_primal_pointwise(m_tilde: float, w_tilde, tau: float, cost: CellCost,
                          terminal: bool = False, dt: float = 1.0):
    """Prox for a single cell; returns ``(m, w)`` with ``w`` a 4-vector."""
    pw = project_cone(np.asarray(w_tilde, dtype=float))
    p2 = float(pw @ pw)
    term = cost.terminal if terminal else None
    m = float(_solve_density(np.float64(m_tilde), np.float64(p2), tau,
                             cost.running, term, dt))
    return m, pw * (m / (m + tau))


def prox_objective(m, w, m_tilde, w_tilde, tau, cost: CellCost, terminal=False, dt=1.0):
    """Pointwise prox objective (used by checks); ``inf`` outside the domain."""
    w = np.asarray(w, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    if m < 0 or np.any(project_cone(w) != w):
        return np.inf
    if m == 0:
        if np.any(w != 0):
            return np.inf
        kinetic = 0.0
    else:
        kinetic = float(w @ w) / (2.0 * m)
    val = kinetic + float(cost.running.primitive(m))
    if terminal and cost.terminal is not None:
        val += float(cost.terminal.primitive(m)) / dt
    return val + (m - m_tilde) ** 2 / (2 * tau) + float((w - w_tilde) @ (w - w_tilde)) / (2 * tau)


def prox_dual(grid: Grid, nu: float, x_hat: PrimalState, sigma: float, m0, solve):
    """Prox of ``sigma psi^*`` where ``psi`` is the indicator of the constraint.

    Computes ``C^T (C C^T)^{-1} (C x_hat - sigma d)`` over the full level set
    ``0..nt`` (with a zero initial-level component in ``x_hat``), eliminating
    the initial block row before the inner solve.

    ``solve`` maps a reduced right-hand side to ``(z, report)``.
    Returns ``(DualState, report)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    m_full = np.zeros((grid.nt + 1,) + grid.spatial_shape)
    m_full[1:] = x_hat.m
    s = apply_constraint_full(grid, nu, m_full, x_hat.w)
    s[0] -= sigma * np.asarray(m0, dtype=float)
    reduced, z0_data = reduce_rhs(grid, s)
    z, report = solve(reduced)
    z_full = expand_solution(grid, z, z0_data)
    m_out, w_out = apply_constraint_full_transpose(grid, nu, z_full)
    return PrimalState(m_out[1:], w_out), report


def project_constraint(grid: Grid, nu: float, y: PrimalState, m0, solve):
    """Euclidean projection of ``y`` onto the affine constraint set."""
    corr, report = prox_dual(grid, nu, y, 1.0, m0, solve)
    return y - corr, report
