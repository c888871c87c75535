"""Preconditioned conjugate gradients with a relative-residual stopping test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CgReport", "NonFiniteError", "pcg", "cg_tolerance"]


class NonFiniteError(FloatingPointError):
    """CG produced or was given a NaN/inf."""


@dataclass
class CgReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def cg_tolerance(r: float) -> float:
    """Inner tolerance from the current outer residual: ``min(1e-2, max(1e-6, 1e-2 r))``."""
    return min(1e-2, max(1e-6, 1e-2 * r))


def pcg(matvec, precond_apply, b, tol=1e-8, max_iter=None, x0=None):
    """Solve ``A x = b`` for SPD ``A`` given as a callable.

    Parameters
    ----------
    matvec : callable
        ``v -> A v``.
    precond_apply : callable or None
        ``r -> P^{-1} r``; must be SPD.  ``None`` means no preconditioning.
    b : ndarray
        Right-hand side, any shape; the iterate has the same shape.
    tol : float
        Target for ``||b - A x|| / ||b||``.
    max_iter : int, optional
        Defaults to ``10 * b.size``.

    Returns
    -------
    x : ndarray
    report : CgReport
        ``converged`` is false when ``max_iter`` was reached; ``x`` is then
        the last iterate.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("right-hand side is not finite")
    if max_iter is None:
        max_iter = 10 * b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), CgReport(0, 0.0, True)
    if precond_apply is None:
        precond_apply = np.copy

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - matvec(x)
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm <= tol * bnorm:
        return x, CgReport(0, rnorm / bnorm, True)

    z = precond_apply(r)
    p = z.copy()
    rz = np.vdot(r, z)
    while it < max_iter:
        q = matvec(p)
        pq = np.vdot(p, q)
        if not np.isfinite(pq) or not np.isfinite(rz):
            raise NonFiniteError(f"non-finite value in CG at iteration {it}")
        if pq <= 0:
            raise np.linalg.LinAlgError("operator is not positive definite")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        rnorm = np.linalg.norm(r)
        if rnorm <= tol * bnorm:
            return x, CgReport(it, rnorm / bnorm, True)
        z = precond_apply(r)
        rz_new = np.vdot(r, z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x, CgReport(it, rnorm / bnorm, False)
