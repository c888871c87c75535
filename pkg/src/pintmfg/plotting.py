"""Figures for solve, spectrum and bench outputs (rendered to files, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_snapshots", "plot_convergence", "plot_spectrum", "plot_scaling"]


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_snapshots(path, grid, snapshots):
    """Density panels; ``snapshots`` maps a time fraction to an ``(nx, ny)`` field."""
    items = sorted(snapshots.items())
    fig, axes = plt.subplots(1, len(items), figsize=(3.2 * len(items), 3.0), squeeze=False)
    xa, xb, ya, yb = grid.domain
    vmax = max(float(np.max(m)) for _, m in items)
    for ax, (frac, m) in zip(axes[0], items):
        im = ax.imshow(np.asarray(m).T, origin="lower", extent=(xa, xb, ya, yb),
                       vmin=0.0, vmax=vmax, cmap="viridis")
        ax.set_title(f"t = {frac * grid.T:g}")
        ax.set_xlabel("x")
    axes[0][0].set_ylabel("y")
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
    return _save(fig, path)


def plot_convergence(path, stats, cp_tol=None):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.2))
    it = np.arange(1, len(stats) + 1)
    a1.semilogy(it, np.maximum(stats.r, 1e-300))
    if cp_tol:
        a1.axhline(cp_tol, color="k", ls="--", lw=0.8)
    a1.set_xlabel("CP iteration")
    a1.set_ylabel("r")
    a2.plot(it, stats.cg_iterations, ".")
    a2.set_xlabel("CP iteration")
    a2.set_ylabel("CG iterations")
    return _save(fig, path)


def plot_spectrum(path, spectra):
    """Non-unity eigenvalues per ``(nu, l)``; ``spectra`` maps the pair to an array."""
    ls = sorted({l for _, l in spectra})
    fig, axes = plt.subplots(1, len(ls), figsize=(4.5 * len(ls), 3.4), squeeze=False)
    for ax, l in zip(axes[0], ls):
        for (nu, ll), mu in sorted(spectra.items()):
            if ll == l:
                ax.plot(np.arange(1, len(mu) + 1), np.real(mu), ".", label=f"nu={nu:g}")
        ax.set_title(f"l = {l}")
        ax.set_xlabel("index")
        ax.set_ylabel("eigenvalue")
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_scaling(path, rows):
    modes = sorted({r["mode"] for r in rows})
    fig, axes = plt.subplots(1, len(modes), figsize=(4.5 * len(modes), 3.4), squeeze=False)
    for ax, mode in zip(axes[0], modes):
        sel = [r for r in rows if r["mode"] == mode]
        th = [r["threads"] for r in sel]
        ax.plot(th, [r["wall_time"] for r in sel], "o-", label="total")
        ax.plot(th, [r["precond_time"] for r in sel], "s-", label="preconditioner")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("threads")
        ax.set_ylabel("time [s]")
        ax.set_title(mode)
        ax.legend(fontsize=8)
    return _save(fig, path)
