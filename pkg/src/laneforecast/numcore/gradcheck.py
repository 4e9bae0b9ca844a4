"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import BranchProbe, Tape, Tensor, backward


@dataclass
class GradcheckReport:
    max_rel_error: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    evaluations: int = 0
    checks: int = 0
    skipped: int = 0  # samples whose two sides fell on different pieces

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    names: Sequence[str] | None = None,
    eps: float = 1e-5,
    entries: int | None = 3,
    floor: float = 1e-6,
    seed: int = 0,
    retries: int = 8,
    shrink: int = 1,
) -> GradcheckReport:
    """Compare tape gradients of scalar ``fn()`` with central differences.

    Every tensor gets one directional check along a random Gaussian direction
    (covering all of its coordinates at once) plus ``entries`` randomly chosen
    single coordinates; ``entries=None`` checks every coordinate.  The error of
    a directional check is ``|a - n| / max(|a|, |n|, floor)``.  Single
    coordinates are measured normwise, against the largest analytic entry of
    the same tensor, because an entry far smaller than its neighbours is
    dominated by round-off in the loss difference.

    A sample whose ``+eps`` and ``-eps`` evaluations select different branches
    of some piecewise op (see ``BranchProbe``) straddles a kink, so its
    difference quotient is not a derivative estimate.  Such a sample is first
    repeated with the step cut tenfold (``shrink`` times), then replaced by a
    fresh one, up to ``retries`` times for the directional check; if no smooth
    sample is found the last one is scored anyway.
    """
    rng = np.random.default_rng(seed)
    names = list(names) if names is not None else [f"t{i}" for i in range(len(tensors))]
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    report = GradcheckReport(0.0)

    def difference(t: Tensor, direction: np.ndarray) -> tuple[float, bool]:
        base = t.data.copy()
        step = eps
        try:
            for _ in range(shrink + 1):
                with BranchProbe() as up_probe:
                    t.data = base + step * direction
                    up = fn().item()
                with BranchProbe() as down_probe:
                    t.data = base - step * direction
                    down = fn().item()
                report.evaluations += 2
                if up_probe.same_branches(down_probe):
                    return (up - down) / (2.0 * step), True
                step /= 10.0
        finally:
            t.data = base
        return (up - down) / (2.0 * step * 10.0), False

    for name, t, g in zip(names, tensors, grads):
        worst = 0.0
        for attempt in range(retries + 1):
            d = rng.standard_normal(t.shape)
            numeric, smooth = difference(t, d)
            if smooth or attempt == retries:
                break
            report.skipped += 1
        worst = max(worst, relative_error(float((g * d).sum()), numeric, floor))
        report.checks += 1

        scale = max(float(np.abs(g).max()), floor)
        order = rng.permutation(t.data.size)
        wanted = t.data.size if entries is None else min(entries, t.data.size)
        done = 0
        for idx in order:
            if done == wanted:
                break
            unit = np.zeros(t.data.size)
            unit[idx] = 1.0
            numeric, smooth = difference(t, unit.reshape(t.shape))
            if not smooth:
                report.skipped += 1
                continue
            worst = max(worst, relative_error(float(g.reshape(-1)[idx]), numeric, scale))
            done += 1
            report.checks += 1
        report.per_tensor[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
