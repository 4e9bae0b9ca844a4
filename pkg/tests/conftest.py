"""Shared builders and brute-force oracles for the test suite."""

from __future__ import annotations

import copy

import numpy as np
import pytest

from laneforecast.mapgraph import Lane


def random_lanes(rng: np.random.Generator, max_nodes: int = 50, max_lanes: int = 6) -> list[Lane]:
    """A random map: polyline lanes with random successor and side links."""
    n_lanes = int(rng.integers(1, max_lanes + 1))
    lanes, budget = [], max_nodes
    for i in range(n_lanes):
        if budget < 1:
            break
        n_pts = int(rng.integers(2, min(8, budget + 1) + 1))
        start = rng.uniform(-30, 30, size=2)
        angle = rng.uniform(0, 2 * np.pi, n_pts - 1)
        steps = rng.uniform(0.5, 3.0, size=(n_pts - 1, 1)) * np.stack(
            [np.cos(angle), np.sin(angle)], axis=1)
        pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
        lanes.append(Lane(f"L{i}", pts))
        budget -= n_pts - 1
    ids = [lane.id for lane in lanes]
    for lane in lanes:
        others = [x for x in ids if x != lane.id]
        for o in others:
            if rng.random() < 0.25:
                lane.successors.append(o)
        if others and rng.random() < 0.3:
            lane.left = others[int(rng.integers(len(others)))]
        if others and rng.random() < 0.3:
            lane.right = others[int(rng.integers(len(others)))]
    return lanes


def dense_lane_oracle(lanes: list[Lane]) -> dict[str, np.ndarray]:
    """Adjacencies by explicit loops over lanes, links and node pairs."""
    first, last, owner, mids = {}, {}, [], []
    for lane in lanes:
        first[lane.id] = len(owner)
        for a, b in zip(lane.centerline[:-1], lane.centerline[1:]):
            owner.append(lane.id)
            mids.append((a + b) / 2.0)
        last[lane.id] = len(owner) - 1
    n = len(owner)
    suc = np.zeros((n, n))
    for i in range(n - 1):
        if owner[i] == owner[i + 1]:
            suc[i, i + 1] = 1.0
    for lane in lanes:
        for s in lane.successors:
            suc[last[lane.id], first[s]] = 1.0
        for p in lane.predecessors:
            suc[last[p], first[lane.id]] = 1.0
    side = {"left": np.zeros((n, n)), "right": np.zeros((n, n))}
    for lane in lanes:
        for kind in ("left", "right"):
            other = getattr(lane, kind)
            if other is None:
                continue
            for i in range(first[lane.id], last[lane.id] + 1):
                best, best_d = None, np.inf
                for j in range(first[other], last[other] + 1):
                    d = np.sqrt(((mids[i] - mids[j]) ** 2).sum())
                    if d < best_d:
                        best, best_d = j, d
                side[kind][i, best] = 1.0
    return {"suc": suc, "pre": suc.T.copy(), "left": side["left"], "right": side["right"]}


def dense_bool_power(a: np.ndarray, k: int) -> np.ndarray:
    b = (a != 0).astype(np.int64)
    out = np.eye(len(a), dtype=np.int64)
    for _ in range(k):
        out = np.minimum(out @ b, 1)
    return (out > 0).astype(np.float64)


def chain_lane(n_nodes: int, lane_id: str = "c", y: float = 0.0) -> Lane:
    return Lane(lane_id, np.stack([np.arange(n_nodes + 1, dtype=float), np.full(n_nodes + 1, y)], 1))


def rigid(theta: float, shift):
    """World-to-world rotation by ``theta`` followed by a shift."""
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return lambda p: np.asarray(p) @ rot.T + shift


def transform_scene(scene, tf):
    """Copy of a scenario with every coordinate mapped through ``tf``."""
    out = copy.deepcopy(scene)
    for a in out.actors:
        a.observed = tf(a.observed)
    for lane in out.lanes:
        lane.centerline = tf(lane.centerline)
    if out.futures is not None:
        out.futures = {k: tf(v) for k, v in out.futures.items()}
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
