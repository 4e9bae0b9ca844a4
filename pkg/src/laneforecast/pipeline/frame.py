"""Agent-centric coordinate frames."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..mapgraph import Lane
from .scenario import Actor, Scenario

REGION_RADIUS = 100.0


@dataclass(frozen=True)
class Frame:
    """Maps world points ``p`` to ``R (p - origin)``."""

    origin: np.ndarray
    rotation: np.ndarray

    @classmethod
    def identity(cls) -> "Frame":
        return cls(np.zeros(2), np.eye(2))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - self.origin) @ self.rotation.T

    def invert(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation + self.origin


def agent_frame(scenario: Scenario) -> Frame:
    """Origin at the agent's t=0 position, +x along its last displacement.

    A stationary agent (zero last displacement) keeps the world orientation.
    """
    obs = scenario.agent.observed
    origin = obs[-1].copy()
    heading = obs[-1] - obs[-2]
    norm = float(np.hypot(*heading))
    if not np.isfinite(norm) or norm == 0.0:
        return Frame(origin, np.eye(2))
    c, s = heading / norm
    return Frame(origin, np.array([[c, s], [-s, c]]))


def _last_valid(obs: np.ndarray) -> np.ndarray | None:
    valid = ~np.isnan(obs).any(axis=1)
    return obs[np.flatnonzero(valid)[-1]] if valid.any() else None


def normalize(scenario: Scenario, radius: float = REGION_RADIUS) -> tuple[Scenario, Frame]:
    """Express a scenario in the agent frame, dropping content beyond ``radius``."""
    frame = agent_frame(scenario)
    actors = []
    for a in scenario.actors:
        last = _last_valid(a.observed)
        if last is None:
            continue
        if a.id != scenario.agent_id and np.hypot(*(last - frame.origin)) >= radius:
            continue
        actors.append(Actor(a.id, frame.apply(a.observed)))
    kept_ids = {a.id for a in actors}

    kept_lanes = []
    for lane in scenario.lanes:
        d = np.linalg.norm(lane.centerline - frame.origin, axis=1)
        if d.min() < radius:
            kept_lanes.append(lane)
    lane_ids = {lane.id for lane in kept_lanes}
    lanes = [Lane(
        lane.id,
        frame.apply(lane.centerline),
        [p for p in lane.predecessors if p in lane_ids],
        [s for s in lane.successors if s in lane_ids],
        lane.left if lane.left in lane_ids else None,
        lane.right if lane.right in lane_ids else None,
    ) for lane in kept_lanes]

    futures = None
    if scenario.futures is not None:
        futures = {k: frame.apply(v) for k, v in scenario.futures.items() if k in kept_ids}
    meta = dict(scenario.meta)
    if "branch_futures" in meta:
        meta["branch_futures"] = {k: frame.apply(v) for k, v in meta["branch_futures"].items()}
    return replace(scenario, actors=actors, lanes=lanes, futures=futures, meta=meta), frame


def denormalize_forecast(trajectories, frame: Frame) -> np.ndarray:
    """Map agent-frame trajectories (any leading shape, last axis 2) back to world."""
    return frame.invert(trajectories)
