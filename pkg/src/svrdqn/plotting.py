"""Figure rendering for run and sweep outputs (PNG files, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
}

COLORS = {"adam-baseline": "tab:blue", "svr-dqn": "tab:orange",
          "double-dqn-minibatch": "tab:blue"}


def _figure(width=5.0, ratio=0.62):
    return plt.subplots(figsize=(width, width * ratio))


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_learning_curves(aggregates: dict[str, dict[str, np.ndarray]], path, title="",
                         optimal: float | None = None) -> Path:
    """Mean eval return per optimizer with a one-standard-deviation band."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for kind, agg in aggregates.items():
            x, mu, sd = agg["frame"], agg["mean_return"], agg["std_return"]
            color = COLORS.get(kind)
            ax.plot(x, agg["moving_avg_4"], color=color, lw=1.6, label=kind)
            ax.fill_between(x, mu - sd, mu + sd, color=color, alpha=0.2, lw=0)
        if optimal is not None:
            ax.axhline(optimal, color="0.4", ls="--", lw=0.8, label="optimal")
        ax.set_xlabel("frames")
        ax.set_ylabel("discounted eval return")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_gradient_variance(curves: dict[str, tuple[np.ndarray, np.ndarray]], path, title="") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        plotted = False
        for kind, (x, var) in curves.items():
            ok = np.isfinite(var) & (var > 0)
            if ok.any():
                ax.semilogy(x[ok], var[ok], color=COLORS.get(kind), lw=1.4, label=kind)
                plotted = True
        ax.set_xlabel("frames")
        ax.set_ylabel("gradient estimate variance")
        ax.set_title(title)
        if plotted:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_variance_sweep(rows: list[dict], path, title="") -> Path:
    """Empirical variance vs bound at each sweep point, log scale."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for tag in sorted({r["estimator"] for r in rows}):
            sel = [r for r in rows if r["estimator"] == tag]
            x = np.array([r["iteration"] for r in sel])
            emp = np.array([r["empirical_var"] for r in sel])
            bound = np.array([r["bound"] for r in sel])
            color = COLORS.get(tag)
            # zero variance cannot be drawn on a log axis; floor it for display only
            ax.semilogy(x, np.maximum(emp, 1e-30), "o-", color=color, label=f"{tag} empirical")
            ax.semilogy(x, np.maximum(bound, 1e-30), "--", color=color, label=f"{tag} bound")
        ax.set_xlabel("point along descent trajectory")
        ax.set_ylabel("trace variance")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)
