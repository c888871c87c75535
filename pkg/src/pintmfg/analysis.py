"""Spectral diagnostics of the preconditioned system and a mass audit."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .grid import Grid, apply_bigA
from .precond import PinTPreconditioner, PrecondSpec, apply_P

__all__ = [
    "MAX_SPECTRUM_SIZE",
    "UNITY_TOL",
    "SpectrumReport",
    "MassAudit",
    "dense_operator",
    "preconditioned_spectrum",
    "nonunity_spectrum",
    "mass_audit",
    "write_eigenvalues_csv",
    "read_eigenvalues_csv",
]

MAX_SPECTRUM_SIZE = 1024
UNITY_TOL = 1e-8


@dataclass
class SpectrumReport:
    """Eigenvalues of ``P^{-1} A`` on a small grid.

    ``nonunity`` holds the ``nx * ny`` eigenvalues of ``1 + P^{-1} H`` that
    may differ from one (the rank of ``H`` bounds their number).
    """

    nu: float
    l: int
    eigenvalues: np.ndarray
    nonunity: np.ndarray
    unity_count: int
    max_deviation: float

    @property
    def bound(self) -> int:
        """Lower bound ``(nt - 1) nx ny`` on the unity count."""
        return self.eigenvalues.size - self.nonunity.size


@dataclass
class MassAudit:
    masses: np.ndarray
    initial_mass: float
    max_deviation: float


def _check_size(grid: Grid):
    if grid.size > MAX_SPECTRUM_SIZE:
        raise ValueError(f"dense spectrum limited to {MAX_SPECTRUM_SIZE} unknowns, got {grid.size}")


def dense_operator(grid: Grid, apply) -> np.ndarray:
    """Assemble the matrix of a linear map on reduced fields by probing unit vectors."""
    n = grid.size
    out = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = np.ravel(apply(e))
        e[j] = 0.0
    return out


def nonunity_spectrum(grid: Grid, nu: float, l: int) -> np.ndarray:
    """Eigenvalues of ``1 + (P^{-1})_{11} H_{11}``, sorted by real part.

    ``H = A - P`` vanishes outside the first diagonal block, so these are the
    only eigenvalues of ``P^{-1} A`` allowed to differ from one.
    """
    _check_size(grid)
    ns = grid.nx * grid.ny
    A = lambda v: apply_bigA(grid, nu, v)
    P = lambda v: apply_P(grid, nu, l, v)
    H11 = np.empty((ns, ns))
    Pinv11 = np.empty((ns, ns))
    e = np.zeros(grid.size)
    with PinTPreconditioner(PrecondSpec(grid, nu, l)) as prec:
        for j in range(ns):
            e[j] = 1.0
            H11[:, j] = (A(e) - P(e))[:ns]
            Pinv11[:, j] = prec.apply(e)[:ns]
            e[j] = 0.0
    mu = 1.0 + np.linalg.eigvals(Pinv11 @ H11)
    return mu[np.argsort(mu.real, kind="stable")]


def preconditioned_spectrum(grid: Grid, nu: float, l: int, method: str = "explicit") -> SpectrumReport:
    """Full spectrum of ``P^{-1} A`` by dense assembly.

    ``method="explicit"`` forms ``P^{-1} A`` column by column and calls a
    nonsymmetric eigensolver; ``"pencil"`` solves the symmetric-definite
    pencil ``(A, P)`` instead, which returns real eigenvalues.
    """
    _check_size(grid)
    A = dense_operator(grid, lambda v: apply_bigA(grid, nu, v))
    if method == "explicit":
        with PinTPreconditioner(PrecondSpec(grid, nu, l)) as prec:
            M = np.column_stack([prec.apply(A[:, j]) for j in range(grid.size)])
        lam = np.linalg.eigvals(M)
    elif method == "pencil":
        P = dense_operator(grid, lambda v: apply_P(grid, nu, l, v))
        lam = sla.eigh(A, P, eigvals_only=True).astype(complex)
    else:
        raise ValueError(f"unknown method {method!r}")
    lam = lam[np.argsort(lam.real, kind="stable")]
    dev = np.abs(lam - 1.0)
    return SpectrumReport(
        nu=float(nu), l=int(l), eigenvalues=lam,
        nonunity=nonunity_spectrum(grid, nu, l),
        unity_count=int(np.count_nonzero(dev <= UNITY_TOL)),
        max_deviation=float(dev.max()),
    )


def mass_audit(m, m0) -> MassAudit:
    """Per-level masses ``sum_ij m^k`` and their largest deviation from ``sum m0``.

    Masses are plain sums (no cell-area weight), matching the discrete
    continuity constraint.
    """
    m = np.asarray(m, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    masses = m.reshape(m.shape[0], -1).sum(axis=1)
    total0 = float(m0.sum())
    return MassAudit(masses, total0, float(np.max(np.abs(masses - total0))) if masses.size else 0.0)


def write_eigenvalues_csv(path, eigenvalues):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "real", "imag"])
        for i, z in enumerate(np.asarray(eigenvalues, dtype=complex)):
            w.writerow([i, repr(float(z.real)), repr(float(z.imag))])
    return path


def read_eigenvalues_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([complex(float(r["real"]), float(r["imag"])) for r in rows])
