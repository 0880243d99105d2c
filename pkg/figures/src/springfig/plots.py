"""The two paper-style figures: model comparison bars and generalization
curves, both on log error axes."""

from __future__ import annotations

import warnings

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsError, MetricsTable

METRIC_LABELS = {"rollout_rmse": "rollout RMSE",
                 "energy_error": "relative energy error"}


def _median_band(values):
    arr = np.asarray(values, dtype=float)
    return float(np.median(arr)), float(arr.min()), float(arr.max())


def plot_model_comparison(table: MetricsTable, out_path,
                          metric: str = "rollout_rmse") -> str:
    """One group per model: median with a min-max band, log error axis."""
    if len(table) == 0:
        raise MetricsError("no evaluation rows to plot")
    if metric not in METRIC_LABELS:
        raise MetricsError(f"unknown metric {metric!r}")

    models = table.models()
    medians, lows, highs = [], [], []
    for model in models:
        med, lo, hi = _median_band(table.values(metric, model_kind=model))
        medians.append(med)
        lows.append(med - lo)
        highs.append(hi - med)

    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(models), 3.4))
    x = np.arange(len(models))
    ax.errorbar(x, medians, yerr=[lows, highs], fmt="o", capsize=4,
                color="tab:blue", ecolor="tab:blue")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(models, rotation=20, ha="right")
    ax.set_ylabel(METRIC_LABELS[metric])
    ax.set_title("Model comparison (median, min-max band)")
    ax.grid(True, axis="y", which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_generalization(table: MetricsTable, axis: str, out_path,
                        metric: str = "rollout_rmse") -> str:
    """One curve per (model, train integrator) over test dt or integrator.

    Cells where the test integrator equals the training integrator are
    marked with black circles. Missing grid cells are skipped with a
    warning.
    """
    if len(table) == 0:
        raise MetricsError("no evaluation rows to plot")
    if axis not in ("dt", "test_integrator"):
        raise MetricsError(f"unknown generalization axis {axis!r}")
    column = "test_dt" if axis == "dt" else "test_integrator"
    ticks = sorted({row[column] for row in table.rows})
    curves = sorted({(row["model_kind"], row["train_integrator"])
                     for row in table.rows})

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    positions = {tick: i for i, tick in enumerate(ticks)}
    matched_x, matched_y = [], []
    for model, train_integrator in curves:
        xs, ys = [], []
        for tick in ticks:
            values = table.values(metric, model_kind=model,
                                  train_integrator=train_integrator,
                                  **{column: tick})
            if not values:
                warnings.warn(f"missing cell {model}/{train_integrator} at "
                              f"{column}={tick}; skipped")
                continue
            x = tick if axis == "dt" else positions[tick]
            y = float(np.median(values))
            xs.append(x)
            ys.append(y)
            matched = table.values("matched_integrators", model_kind=model,
                                   train_integrator=train_integrator,
                                   **{column: tick})
            if any(matched):
                matched_x.append(x)
                matched_y.append(y)
        ax.plot(xs, ys, marker=".", label=f"{model} ({train_integrator})")
    if matched_x:
        ax.scatter(matched_x, matched_y, s=70, facecolors="none",
                   edgecolors="black", zorder=5, label="matched train/test")

    ax.set_yscale("log")
    if axis == "dt":
        ax.set_xscale("log")
        ax.set_xticks(ticks)
        ax.set_xticklabels([f"{t:g}" for t in ticks], rotation=45)
        ax.minorticks_off()
        ax.set_xlabel("evaluation time step")
    else:
        ax.set_xticks(range(len(ticks)))
        ax.set_xticklabels(ticks)
        ax.set_xlabel("evaluation integrator")
    ax.set_ylabel(METRIC_LABELS.get(metric, metric))
    ax.set_title("Generalization")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
