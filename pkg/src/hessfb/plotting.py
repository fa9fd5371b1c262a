"""Matplotlib figures written next to the CLI's CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import Grid  # noqa: E402

# fixed salt and no date stamp so SVG bytes depend only on the data
_SVG_RC = {"svg.hashsalt": "hessfb", "svg.fonttype": "none"}


def _save(fig, path: Path) -> None:
    path = Path(path)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    if path.suffix == ".png":
        meta = {"Software": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_minimizer(grid: Grid, u: np.ndarray, totals: list[float], path: str | Path) -> None:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 4))
    shown = np.ma.masked_where(~grid.active, u)
    im = ax0.imshow(shown, origin="lower", extent=(-1, 1, -1, 1), cmap="viridis")
    ax0.contour(grid.x, grid.y, np.where(grid.active, u, np.nan), levels=[1e-12],
                colors="w", linewidths=0.8)
    ax0.set_title("u*")
    ax0.set_aspect("equal")
    fig.colorbar(im, ax=ax0, shrink=0.8)
    if totals:
        ax1.plot(np.arange(len(totals)), totals, lw=1.0)
    ax1.set_xlabel("accepted iteration")
    ax1.set_ylabel("energy")
    ax1.set_title("descent history")
    fig.tight_layout()
    _save(fig, Path(path))


def plot_sweep(lambdas, energies, g0_u0: float, dists, path: str | Path) -> None:
    """Energy and distance to u0 against Lambda on a log axis."""
    with plt.rc_context(_SVG_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
        ax0.semilogx(lambdas, energies, "o-", label="G_Lambda[u_Lambda]")
        ax0.axhline(g0_u0, color="k", ls="--", lw=0.8, label="G_0[u_0]")
        ax0.set_xlabel("Lambda")
        ax0.set_ylabel("energy")
        ax0.legend(fontsize=8)
        ax1.loglog(lambdas, np.maximum(np.asarray(dists, dtype=float), 1e-300), "s-")
        ax1.set_xlabel("Lambda")
        ax1.set_ylabel("W1p distance to u_0")
        fig.tight_layout()
        _save(fig, Path(path))


def plot_free_boundary(grid: Grid, u: np.ndarray, segments: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    shown = np.ma.masked_where(~grid.active, u)
    ax.imshow(shown, origin="lower", extent=(-1, 1, -1, 1), cmap="Greys")
    if len(segments):
        from matplotlib.collections import LineCollection
        ax.add_collection(LineCollection(segments, colors="tab:red", linewidths=1.2))
    ax.set_aspect("equal")
    ax.set_title("level curve")
    fig.tight_layout()
    _save(fig, Path(path))
