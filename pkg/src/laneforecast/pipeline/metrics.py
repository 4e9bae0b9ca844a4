"""minADE / minFDE / miss rate over the top-K scored modes of the agent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MISS_THRESHOLD = 2.0


def top_k_modes(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` highest scores; equal scores keep their original order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")[:k]


def displacement_errors(traj: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode ADE and FDE for K x H x 2 trajectories against H x 2 truth.

    The time average uses a correctly rounded sum, so the result does not
    depend on summation order.
    """
    diff = np.asarray(traj, dtype=np.float64) - np.asarray(gt, dtype=np.float64)[None]
    d = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])
    ade = np.array([math.fsum(row) / len(row) for row in d])
    return ade, d[:, -1]


def instance_metrics(traj, scores, gt, k: int) -> tuple[float, float, bool]:
    """(minADE, minFDE, missed) of one forecast restricted to its top-``k`` modes."""
    modes = top_k_modes(scores, k)
    ade, fde = displacement_errors(np.asarray(traj)[modes], gt)
    best = float(fde.min())
    return float(ade.min()), best, best > MISS_THRESHOLD


@dataclass
class MetricsReport:
    min_ade: dict[int, float] = field(default_factory=dict)
    min_fde: dict[int, float] = field(default_factory=dict)
    miss_rate: dict[int, float] = field(default_factory=dict)
    count: int = 0
    skipped: int = 0

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [(k, self.min_ade[k], self.min_fde[k], self.miss_rate[k]) for k in sorted(self.min_ade)]

    def to_tsv(self) -> str:
        lines = ["k\tminADE\tminFDE\tMR\tcount\tskipped"]
        for k, ade, fde, mr in self.rows():
            lines.append(f"{k}\t{ade:.6f}\t{fde:.6f}\t{mr:.6f}\t{self.count}\t{self.skipped}")
        return "\n".join(lines) + "\n"


def evaluate(forecasts, scenarios, ks=(1, 6)) -> MetricsReport:
    """Average metrics over scenarios, in scenario order.

    ``forecasts`` maps scenario id to an object with ``trajectories`` (K x H x 2)
    and ``scores`` (K), both in the world frame.  Scenarios without a forecast
    or without an agent future are skipped and counted.
    """
    if not isinstance(forecasts, dict):
        forecasts = {f.scenario_id: f for f in forecasts}
    sums = {k: np.zeros(3) for k in ks}
    count = skipped = 0
    for s in scenarios:
        f = forecasts.get(s.id)
        gt = None if s.futures is None else s.futures.get(s.agent_id)
        if f is None or gt is None:
            skipped += 1
            continue
        count += 1
        for k in ks:
            ade, fde, miss = instance_metrics(f.trajectories, f.scores, gt, k)
            sums[k] += (ade, fde, float(miss))
    report = MetricsReport(count=count, skipped=skipped)
    for k in ks:
        mean = sums[k] / count if count else np.full(3, np.nan)
        report.min_ade[k], report.min_fde[k], report.miss_rate[k] = map(float, mean)
    return report
