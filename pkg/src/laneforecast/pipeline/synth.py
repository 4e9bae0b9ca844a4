"""Seeded synthetic road scenes with vehicles following lane centerlines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mapgraph import Lane
from .scenario import FUTURE_STEPS, OBS_STEPS, Actor, Scenario

TOPOLOGIES = ("straight", "curve", "fork", "merge", "parallel")
DT = 0.1
LANE_WIDTH = 3.5


@dataclass
class SynthSpec:
    n_scenarios: int = 32
    seed: int = 0
    topology: str | tuple[str, ...] = "straight"
    speed_range: tuple[float, float] = (5.0, 12.0)
    spacing: float = 2.0
    lateral_noise: float = 0.05
    max_others: int = 3
    piece_points: int = 15  # centerline points per lane piece

    def topologies(self) -> tuple[str, ...]:
        topo = (self.topology,) if isinstance(self.topology, str) else tuple(self.topology)
        for t in topo:
            if t not in TOPOLOGIES:
                raise ValueError(f"unknown topology {t!r}; choose from {TOPOLOGIES}")
        return topo


def _trace(x, y, heading, pieces, spacing) -> np.ndarray:
    """Points every ``spacing`` meters along (length, curvature) pieces."""
    pts = [(x, y)]
    for length, kappa in pieces:
        for _ in range(int(round(length / spacing))):
            if kappa == 0.0:
                x += spacing * np.cos(heading)
                y += spacing * np.sin(heading)
            else:
                new = heading + kappa * spacing
                x += (np.sin(new) - np.sin(heading)) / kappa
                y -= (np.cos(new) - np.cos(heading)) / kappa
                heading = new
            pts.append((x, y))
    return np.asarray(pts)


def _split(prefix: str, pts: np.ndarray, per_piece: int) -> list[Lane]:
    """Cut a polyline into chained lanes sharing their boundary points."""
    lanes = []
    start = 0
    idx = 0
    while start < len(pts) - 1:
        stop = min(start + per_piece - 1, len(pts) - 1)
        if len(pts) - 1 - stop < 2:
            stop = len(pts) - 1
        lanes.append(Lane(f"{prefix}{idx}", pts[start:stop + 1].copy()))
        start = stop
        idx += 1
    for a, b in zip(lanes, lanes[1:]):
        a.successors.append(b.id)
        b.predecessors.append(a.id)
    return lanes


def _link(a: Lane, b: Lane) -> None:
    a.successors.append(b.id)
    b.predecessors.append(a.id)


def _route(*segments: np.ndarray) -> np.ndarray:
    out = [segments[0]]
    for seg in segments[1:]:
        out.append(seg[1:] if np.allclose(seg[0], out[-1][-1]) else seg)
    return np.concatenate(out)


def sample_route(route: np.ndarray, s) -> tuple[np.ndarray, np.ndarray]:
    """Positions and unit tangents at arc lengths ``s``; linear beyond the ends."""
    s = np.asarray(s, dtype=np.float64)
    seg = np.diff(route, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / seg_len[idx]
    tangent = seg[idx] / seg_len[idx, None]
    return route[idx] + frac[:, None] * seg[idx], tangent


def _route_length(route: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(route, axis=0), axis=1).sum())


def _motion(route, s0, speed, rng, noise, first_step=-(OBS_STEPS - 1)):
    """Observed (OBS_STEPS) and future (FUTURE_STEPS) points for a constant-speed track."""
    t = np.arange(first_step, FUTURE_STEPS + 1) * DT
    pts, tangent = sample_route(route, s0 + speed * t)
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    pts = pts + normal * rng.normal(0.0, noise, size=(len(t), 1))
    return pts[:OBS_STEPS], pts[OBS_STEPS:]


def _build(topology: str, rng: np.random.Generator, spec: SynthSpec):
    """Returns lanes, candidate routes (name -> polyline) and the agent route names."""
    sp, pp = spec.spacing, spec.piece_points
    if topology == "straight":
        road = _trace(0.0, 0.0, 0.0, [(160.0, 0.0)], sp)
        lanes = _split("s", road, pp)
        return lanes, {"main": road}, ["main"]
    if topology == "curve":
        kappa = rng.choice([-1.0, 1.0]) / rng.uniform(25.0, 60.0)
        road = _trace(0.0, 0.0, 0.0, [(50.0, 0.0), (110.0, kappa)], sp)
        lanes = _split("c", road, pp)
        return lanes, {"main": road}, ["main"]
    if topology == "fork":
        stem = _trace(0.0, 0.0, 0.0, [(70.0, 0.0)], sp)
        x, y = stem[-1]
        left = _trace(x, y, 0.0, [(60.0, 1.0 / rng.uniform(20.0, 30.0))], sp)
        right = _trace(x, y, 0.0, [(60.0, -1.0 / rng.uniform(20.0, 30.0))], sp)
        stem_l = _split("f", stem, pp)
        left_l = _split("fl", left, pp)
        right_l = _split("fr", right, pp)
        _link(stem_l[-1], left_l[0])
        _link(stem_l[-1], right_l[0])
        routes = {"left": _route(stem, left), "right": _route(stem, right)}
        return stem_l + left_l + right_l, routes, ["left", "right"]
    if topology == "merge":
        main = _trace(0.0, 0.0, 0.0, [(80.0, 0.0)], sp)
        r = rng.uniform(30.0, 50.0)
        steps = max(2, int(round(r * rng.uniform(0.3, 0.6) / sp)))
        arc = steps * sp
        angle = arc / r
        # ramp arrives at the merge point with the main heading
        side = rng.choice([-1.0, 1.0])
        x0 = main[-1, 0] - r * np.sin(angle)
        y0 = main[-1, 1] + side * r * (1.0 - np.cos(angle))
        ramp = _trace(x0, y0, -side * angle, [(arc, side * 1.0 / r)], sp)
        ramp[-1] = main[-1]
        tail = _trace(*main[-1], 0.0, [(80.0, 0.0)], sp)
        main_l = _split("m", main, pp)
        ramp_l = _split("r", ramp, pp)
        tail_l = _split("t", tail, pp)
        _link(main_l[-1], tail_l[0])
        _link(ramp_l[-1], tail_l[0])
        routes = {"main": _route(main, tail), "ramp": _route(ramp, tail)}
        return main_l + ramp_l + tail_l, routes, ["main", "ramp"]
    if topology == "parallel":
        a = _trace(0.0, 0.0, 0.0, [(160.0, 0.0)], sp)
        b = a + np.array([0.0, LANE_WIDTH])
        la, lb = _split("pa", a, pp), _split("pb", b, pp)
        for x, y in zip(la, lb):
            x.left = y.id
            y.right = x.id
        return la + lb, {"right": a, "left": b}, ["right", "left"]
    raise ValueError(f"unknown topology {topology!r}")


def _transform(theta: float, shift: np.ndarray):
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return lambda pts: np.asarray(pts) @ rot.T + shift


def _scenario(idx: int, topology: str, rng: np.random.Generator, spec: SynthSpec) -> Scenario:
    lanes, routes, agent_routes = _build(topology, rng, spec)
    lo, hi = spec.speed_range
    speed = rng.uniform(lo, hi)
    route_name = agent_routes[int(rng.integers(len(agent_routes)))]
    meta = {"topology": topology, "route": route_name, "speed": speed}
    if topology == "fork":
        stem_len = 70.0
        s0 = stem_len - rng.uniform(2.0, 10.0)
    elif topology == "merge":
        s0 = _route_length(routes[route_name]) - 80.0 - rng.uniform(2.0, 10.0)
    else:
        s0 = rng.uniform(45.0, 70.0)
    obs, fut = _motion(routes[route_name], s0, speed, rng, spec.lateral_noise)
    actors = [Actor("agent", obs)]
    futures = {"agent": fut}
    if topology == "fork":
        meta["branch"] = route_name
        meta["branch_futures"] = {
            name: sample_route(routes[name], s0 + speed * np.arange(1, FUTURE_STEPS + 1) * DT)[0]
            for name in agent_routes
        }

    names = sorted(routes)
    for j in range(int(rng.integers(0, spec.max_others + 1))):
        rname = names[int(rng.integers(len(names)))]
        route = routes[rname]
        o_speed = rng.uniform(lo, hi)
        o_s0 = rng.uniform(25.0, _route_length(route) - 40.0)
        if abs(o_s0 - s0) < 8.0 and rname == route_name:
            o_s0 += 16.0
        o_obs, o_fut = _motion(route, o_s0, o_speed, rng, spec.lateral_noise)
        seen = int(rng.integers(2, OBS_STEPS + 1))
        o_obs = o_obs.copy()
        o_obs[: OBS_STEPS - seen] = np.nan
        actors.append(Actor(f"other{j}", o_obs))
        futures[f"other{j}"] = o_fut

    tf = _transform(rng.uniform(0.0, 2.0 * np.pi), rng.uniform(-500.0, 500.0, size=2))
    for a in actors:
        a.observed = tf(a.observed)
    futures = {k: tf(v) for k, v in futures.items()}
    for lane in lanes:
        lane.centerline = tf(lane.centerline)
    if "branch_futures" in meta:
        meta["branch_futures"] = {k: tf(v) for k, v in meta["branch_futures"].items()}
    return Scenario(f"{topology}-{spec.seed}-{idx:05d}", "agent", actors, lanes, futures, meta)


def synth_corpus(spec: SynthSpec) -> list[Scenario]:
    """Deterministic corpus: the same spec always yields identical scenarios."""
    topo = spec.topologies()
    rng = np.random.default_rng(spec.seed)
    return [_scenario(i, topo[i % len(topo)], rng, spec) for i in range(spec.n_scenarios)]
