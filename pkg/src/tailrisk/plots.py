"""Figure rendering for the report paths; PNG files next to the CSV/JSON output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_forecast_paths(dates, returns, var, es, path, title: str | None = None) -> None:
    """Returns with the VaR/ES forecast bands and violation markers."""
    fig, ax = plt.subplots(figsize=(10, 4.5))
    t = np.arange(len(dates))
    ax.plot(t, returns, lw=0.6, color="0.4", label="return")
    ax.plot(t, var, lw=1.0, color="tab:blue", label="VaR")
    ax.plot(t, es, lw=1.0, color="tab:red", label="ES")
    hits = np.asarray(returns) < np.asarray(var)
    if hits.any():
        ax.plot(t[hits], np.asarray(returns)[hits], "x", ms=5, color="tab:orange",
                label=f"violations ({int(hits.sum())})")
    step = max(len(dates) // 8, 1)
    ax.set_xticks(t[::step])
    ax.set_xticklabels([str(d) for d in dates[::step]], rotation=30, fontsize=7)
    ax.legend(loc="lower left", fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_model_losses(losses_by_model: dict[str, float], path, ylabel: str = "joint loss") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    names = list(losses_by_model)
    vals = [losses_by_model[n] for n in names]
    order = np.argsort(vals)
    ax.barh([names[i] for i in order], [vals[i] for i in order], color="tab:blue")
    ax.set_xlabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_daily_series(dates, values, path, label: str = "measure") -> None:
    fig, ax = plt.subplots(figsize=(10, 3.5))
    t = np.arange(len(dates))
    ax.plot(t, values, lw=0.7, color="tab:blue")
    step = max(len(dates) // 8, 1)
    ax.set_xticks(t[::step])
    ax.set_xticklabels([str(d) for d in dates[::step]], rotation=30, fontsize=7)
    ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
