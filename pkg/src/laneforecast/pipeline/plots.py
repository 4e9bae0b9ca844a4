"""Static figures written next to the TSV reports (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsReport  # noqa: E402
from .scenario import AgentForecast, Scenario  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_scene(scenario: Scenario, forecast: AgentForecast | None, path, title: str | None = None) -> Path:
    """Lanes, observed histories, ground truth and the forecast modes in world coordinates."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for lane in scenario.lanes:
        c = np.asarray(lane.centerline)
        ax.plot(c[:, 0], c[:, 1], color="0.75", lw=1.0, zorder=1)
    for a in scenario.actors:
        obs = a.observed[np.isfinite(a.observed).all(axis=1)]
        is_agent = a.id == scenario.agent_id
        ax.plot(obs[:, 0], obs[:, 1], color="tab:red" if is_agent else "tab:blue",
                lw=2.0 if is_agent else 1.2, zorder=3)
        if len(obs):
            ax.scatter(obs[-1, 0], obs[-1, 1], s=14, color="k", zorder=4)
    if scenario.futures and scenario.agent_id in scenario.futures:
        fut = np.asarray(scenario.futures[scenario.agent_id])
        ax.plot(fut[:, 0], fut[:, 1], color="tab:green", lw=2.0, ls="--", label="ground truth", zorder=3)
    if forecast is not None:
        order = np.argsort(-np.asarray(forecast.scores), kind="stable")
        for rank, k in enumerate(order):
            tr = forecast.trajectories[k]
            ax.plot(tr[:, 0], tr[:, 1], color="tab:orange", alpha=1.0 if rank == 0 else 0.45,
                    lw=1.6, label="forecast" if rank == 0 else None, zorder=2)
            ax.scatter(tr[-1, 0], tr[-1, 1], s=10, color="tab:orange", zorder=2)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title or scenario.id)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_loss_curve(losses, path, cls_losses=None, reg_losses=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    steps = np.arange(1, len(losses) + 1)
    ax.plot(steps, losses, label="total")
    if cls_losses is not None:
        ax.plot(steps, cls_losses, label="cls", alpha=0.7)
    if reg_losses is not None:
        ax.plot(steps, reg_losses, label="reg", alpha=0.7)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_metrics(report: MetricsReport, path) -> Path:
    rows = report.rows()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r[1] for r in rows], width=0.4, label="minADE")
    ax.bar(x + 0.2, [r[2] for r in rows], width=0.4, label="minFDE")
    ax.set_xticks(x, [f"K={r[0]}" for r in rows])
    ax.set_ylabel("meters")
    ax.set_title(f"{report.count} scenarios")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_ablation(names, ade, fde, path) -> Path:
    fig, ax = plt.subplots(figsize=(max(5, 1.1 * len(names)), 3.8))
    x = np.arange(len(names))
    ax.bar(x - 0.2, ade, width=0.4, label="minADE (K=6)")
    ax.bar(x + 0.2, fde, width=0.4, label="minFDE (K=6)")
    ax.set_xticks(x, names, rotation=30, ha="right")
    ax.set_ylabel("meters")
    ax.legend(fontsize=8)
    return _save(fig, path)
