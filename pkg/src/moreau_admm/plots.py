"""Figure rendering for the report path.  CSV files stay the canonical
output; these are the same curves as pictures."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_mse_vs_iteration", "plot_mse_vs_gamma", "plot_mse_vs_dimension"]

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

_LABELS = {"madm": "MADM", "dpsm": "DPSM"}


def plot_mse_vs_iteration(curves: dict, path) -> None:
    """Averaged MSE against iteration count, one line per method."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method, curve in curves.items():
            curve = np.asarray(curve)
            if curve.size == 0:
                continue
            ax.semilogy(np.arange(1, curve.size + 1), curve, label=_LABELS.get(method, method))
        ax.set_xlabel("iteration")
        ax.set_ylabel("MSE")
        if curves:
            ax.legend()
        fig.savefig(path)
        plt.close(fig)


def plot_mse_vs_gamma(rows, path) -> None:
    """Final averaged MSE of the subgradient baseline per step-decay value."""
    gammas = [gv for gv, _ in rows]
    errs = [err for _, err in rows]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(gammas, errs, marker="o")
        ax.set_xlabel("step-size decay")
        ax.set_ylabel("final MSE")
        fig.savefig(path)
        plt.close(fig)


def plot_mse_vs_dimension(rows, path) -> None:
    """Final averaged MSE per signal dimension, one line per method."""
    by_method: dict[str, list] = {}
    for dim, method, err in rows:
        by_method.setdefault(method, []).append((dim, err))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for method, pts in by_method.items():
            pts.sort()
            ax.semilogy([d for d, _ in pts], [e for _, e in pts], marker="o", label=_LABELS.get(method, method))
        ax.set_xlabel("signal dimension")
        ax.set_ylabel("final MSE")
        if by_method:
            ax.legend()
        fig.savefig(path)
        plt.close(fig)
