"""Optional matplotlib figures for sweep summaries and wavefields."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_sweep(summary, out_dir, compensation_power=0.0) -> list:
    """Log-log plot of rms E_S against M, one line per k.

    When ``compensation_power`` is nonzero, dotted lines show the series
    divided by ``k**compensation_power``.
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for i, k in enumerate(sorted({r["k"] for r in summary})):
        rows = sorted((r for r in summary if r["k"] == k), key=lambda r: r["M"])
        M = np.array([r["M"] for r in rows], dtype=float)
        e = np.array([r["rms_E_S"] for r in rows])
        ax.loglog(M, e, "o-", color=f"C{i}", label=f"k = {int(k)}")
        if compensation_power:
            ax.loglog(M, e / k ** compensation_power, ":", color=f"C{i}")
    M = np.array(sorted({r["M"] for r in summary}), dtype=float)
    if M.size:
        ref = max(r["rms_E_S"] for r in summary if r["M"] == M[0])
        ax.loglog(M, ref * np.sqrt(M[0] / M), "k--", lw=0.8, label=r"$M^{-1/2}$")
    ax.set_xlabel("M")
    ax.set_ylabel(r"$\sqrt{\mathcal{E}_S}$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(out_dir) / "sweep.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def plot_field(field, path, component="u"):
    """Real part of a 1-D field, or |.| of a 2-D field (middle slice in 3-D)."""
    plt = _pyplot()
    arr = getattr(field, component)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    axes = field.grid.axes()
    if arr.ndim == 1:
        ax.plot(axes[0], arr.real, lw=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel(f"Re {component}")
    else:
        if arr.ndim == 3:
            arr = arr[:, :, arr.shape[2] // 2]
        im = ax.pcolormesh(axes[0], axes[1], np.abs(arr).T, shading="auto")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
