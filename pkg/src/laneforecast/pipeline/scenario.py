"""Scenario and forecast records stored as line-delimited JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ..mapgraph import Lane

OBS_STEPS = 20
FUTURE_STEPS = 30
NUM_MODES = 6

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["id", "agent_id", "actors", "map"],
    "properties": {
        "id": {"type": "string"},
        "agent_id": {"type": "string"},
        "actors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "observed"],
                "properties": {
                    "id": {"type": "string"},
                    "observed": {
                        "type": "array",
                        "items": {"anyOf": [_POINT, {"type": "null"}]},
                        "minItems": OBS_STEPS,
                        "maxItems": OBS_STEPS,
                    },
                },
            },
        },
        "map": {
            "type": "object",
            "required": ["lanes"],
            "properties": {
                "lanes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "centerline", "predecessors", "successors",
                                     "left", "right"],
                        "properties": {
                            "id": {"type": "string"},
                            "centerline": {"type": "array", "items": _POINT, "minItems": 2},
                            "predecessors": {"type": "array", "items": {"type": "string"}},
                            "successors": {"type": "array", "items": {"type": "string"}},
                            "left": {"type": ["string", "null"]},
                            "right": {"type": ["string", "null"]},
                        },
                    },
                }
            },
        },
        "futures": {
            "type": "object",
            "additionalProperties": {
                "type": "array", "items": _POINT,
                "minItems": FUTURE_STEPS, "maxItems": FUTURE_STEPS,
            },
        },
    },
}

FORECAST_SCHEMA = {
    "type": "object",
    "required": ["scenario_id", "agent"],
    "properties": {
        "scenario_id": {"type": "string"},
        "agent": {
            "type": "object",
            "required": ["trajectories", "scores"],
            "properties": {
                "trajectories": {
                    "type": "array",
                    "items": {"type": "array", "items": _POINT, "minItems": 1},
                    "minItems": 1,
                },
                "scores": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
        },
    },
}


class ScenarioParseError(ValueError):
    """A record violates the scenario or forecast schema."""


@dataclass
class Actor:
    id: str
    observed: np.ndarray  # OBS_STEPS x 2, NaN where unobserved

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=np.float64).reshape(-1, 2)

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.observed).any(axis=1)


@dataclass
class Scenario:
    id: str
    agent_id: str
    actors: list[Actor]
    lanes: list[Lane]
    futures: dict[str, np.ndarray] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def actor(self, actor_id: str) -> Actor:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    @property
    def agent(self) -> Actor:
        return self.actor(self.agent_id)


def _point_or_none(p):
    return None if np.isnan(p).any() else [float(p[0]), float(p[1])]


def scenario_to_record(s: Scenario) -> dict:
    rec = {
        "id": s.id,
        "agent_id": s.agent_id,
        "actors": [{"id": a.id, "observed": [_point_or_none(p) for p in a.observed]}
                   for a in s.actors],
        "map": {"lanes": [{
            "id": lane.id,
            "centerline": lane.centerline.tolist(),
            "predecessors": list(lane.predecessors),
            "successors": list(lane.successors),
            "left": lane.left,
            "right": lane.right,
        } for lane in s.lanes]},
    }
    if s.futures is not None:
        rec["futures"] = {k: np.asarray(v).tolist() for k, v in s.futures.items()}
    return rec


def _validate(rec, schema, where: str) -> None:
    try:
        jsonschema.validate(rec, schema)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ScenarioParseError(f"{where}: field {path}: {err.message}") from None


def scenario_from_record(rec: dict, where: str = "record") -> Scenario:
    _validate(rec, SCENARIO_SCHEMA, where)
    actors = [Actor(a["id"], [[np.nan, np.nan] if p is None else p for p in a["observed"]])
              for a in rec["actors"]]
    ids = [a.id for a in actors]
    if rec["agent_id"] not in ids:
        raise ScenarioParseError(f"{where}: field agent_id: {rec['agent_id']!r} not among actors")
    agent = actors[ids.index(rec["agent_id"])]
    if not agent.valid.all():
        raise ScenarioParseError(f"{where}: field actors/{ids.index(agent.id)}/observed: "
                                 "agent needs a full observed history")
    lanes = [Lane(lane["id"], np.asarray(lane["centerline"], dtype=np.float64),
                  list(lane["predecessors"]), list(lane["successors"]),
                  lane["left"], lane["right"]) for lane in rec["map"]["lanes"]]
    futures = None
    if "futures" in rec:
        futures = {k: np.asarray(v, dtype=np.float64) for k, v in rec["futures"].items()}
    return Scenario(rec["id"], rec["agent_id"], actors, lanes, futures)


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as err:
                raise ScenarioParseError(f"line {lineno}: invalid JSON: {err.msg}") from None


def load_scenarios(path) -> list[Scenario]:
    return [scenario_from_record(rec, f"line {n}") for n, rec in _read_jsonl(path)]


def save_scenarios(path, scenarios) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in scenarios:
            fh.write(json.dumps(scenario_to_record(s), separators=(",", ":")) + "\n")


@dataclass
class AgentForecast:
    scenario_id: str
    trajectories: np.ndarray  # K x H x 2, world frame
    scores: np.ndarray  # K


def forecast_to_record(f: AgentForecast) -> dict:
    return {"scenario_id": f.scenario_id,
            "agent": {"trajectories": np.asarray(f.trajectories).tolist(),
                      "scores": [float(x) for x in f.scores]}}


def forecast_from_record(rec: dict, where: str = "record") -> AgentForecast:
    _validate(rec, FORECAST_SCHEMA, where)
    traj = np.asarray(rec["agent"]["trajectories"], dtype=np.float64)
    scores = np.asarray(rec["agent"]["scores"], dtype=np.float64)
    if traj.ndim != 3 or len(traj) != len(scores):
        raise ScenarioParseError(f"{where}: field agent: {len(scores)} scores for "
                                 f"trajectories of shape {traj.shape}")
    return AgentForecast(rec["scenario_id"], traj, scores)


def load_forecasts(path) -> list[AgentForecast]:
    return [forecast_from_record(rec, f"line {n}") for n, rec in _read_jsonl(path)]


def save_forecasts(path, forecasts) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for f in forecasts:
            fh.write(json.dumps(forecast_to_record(f), separators=(",", ":")) + "\n")
