"""SVG figures for pipeline outputs (matplotlib, non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "qtnspec"
_META = {"Date": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def error_vs_shots(rows, path):
    n = np.array([r[0] for r in rows], float)
    err = np.array([r[3] for r in rows], float)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.loglog(n, err, "o-", label="relative error")
    ax.loglog(n, err[0] * np.sqrt(n[0] / n), "--", color="gray", label=r"$\propto n^{-1/2}$")
    ax.set_xlabel("shots per basis")
    ax.set_ylabel(r"$|E - E_0| / |E_0|$")
    ax.legend(frameon=False)
    _save(fig, path)


def level_diagram(rows, path):
    B = np.array([r[0] for r in rows])
    E = np.array([r[1:] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(B, E - E[:, :1], "-")
    ax.set_xlabel("B (T)")
    ax.set_ylabel(r"$E_p - E_0$ (meV)")
    _save(fig, path)


def intensity_map(grid, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    q = grid.q_mag
    m = ax.pcolormesh(q, grid.omega, grid.intensity.T, shading="auto")
    fig.colorbar(m, ax=ax, label="I (arb.)")
    ax.set_xlabel(r"$|Q|$ (1/Å)")
    ax.set_ylabel(r"$\hbar\omega$ (meV)")
    _save(fig, path)
