"""End-to-end forecaster: ActorNet and MapNet, fusion cycle, prediction header."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..actornet import ActorNet, ActorNetConfig, InsufficientHistory, encode_trajectory
from ..fusion import FusionConfig, FusionNet
from ..head import Forecast, LossBreakdown, LossConfig, PredictionHeader, total_loss
from ..lanegcn import LaneConvSpec, LaneGCN
from ..mapgraph import LaneGraph, NodeFeatureNet, build_lane_graph
from ..numcore import Module
from .frame import Frame, denormalize_forecast, normalize
from .scenario import FUTURE_STEPS, OBS_STEPS, AgentForecast, Scenario


@dataclass
class ModelConfig:
    channels: int = 128
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    num_modes: int = 6
    horizon: int = FUTURE_STEPS
    obs_steps: int = OBS_STEPS
    lanegcn_blocks: int = 4
    use_map: bool = True
    a2l: bool = True
    l2l: bool = True
    l2a: bool = True
    a2a: bool = True
    multi_type: bool = True
    residual: bool = True
    detach_endpoints: bool = True
    a2l_radius: float = 7.0
    l2a_radius: float = 6.0
    a2a_radius: float = 100.0
    region_radius: float = 100.0
    margin: float = 0.2
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.dilations = tuple(int(k) for k in self.dilations)

    @classmethod
    def paper(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def reduced(cls, **kw) -> "ModelConfig":
        kw.setdefault("channels", 32)
        kw.setdefault("dilations", (1, 2, 4))
        return cls(**kw)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        kw.setdefault("channels", 8)
        kw.setdefault("dilations", (1, 2))
        return cls(**kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    def loss_config(self) -> LossConfig:
        return LossConfig(self.alpha, self.margin, self.num_modes, self.horizon)


@dataclass
class PreparedScene:
    scenario_id: str
    frame: Frame
    graph: LaneGraph
    actor_ids: list[str]
    actor_inputs: np.ndarray  # M x 3 x T
    actor_locs: np.ndarray  # M x 2, t=0 positions in the agent frame
    agent_row: int
    gt: np.ndarray  # M x H x 2 (zeros where missing)
    has_gt: np.ndarray  # M
    scenario: Scenario = field(repr=False, default=None)


def prepare(scenario: Scenario, cfg: ModelConfig) -> PreparedScene:
    """Normalize to the agent frame, build the lane graph and encode actors.

    Actors without a t=0 position or with fewer than two contiguous points are
    left out of both the input and the supervision.
    """
    norm, frame = normalize(scenario, cfg.region_radius)
    ids, inputs, locs, gts, has = [], [], [], [], []
    for a in norm.actors:
        if np.isnan(a.observed[-1]).any():
            continue
        try:
            enc = encode_trajectory(list(a.observed), cfg.obs_steps)
        except InsufficientHistory:
            continue
        fut = None if norm.futures is None else norm.futures.get(a.id)
        ok = fut is not None and len(fut) == cfg.horizon and np.isfinite(fut).all()
        ids.append(a.id)
        inputs.append(enc)
        locs.append(a.observed[-1])
        gts.append(fut if ok else np.zeros((cfg.horizon, 2)))
        has.append(ok)
    if scenario.agent_id not in ids:
        raise InsufficientHistory(f"scenario {scenario.id}: agent lacks usable history")
    graph = build_lane_graph(norm.lanes).precompute(cfg.dilations, union=not cfg.multi_type)
    return PreparedScene(
        scenario.id, frame, graph, ids, np.stack(inputs), np.asarray(locs),
        ids.index(scenario.agent_id), np.stack(gts), np.asarray(has, dtype=bool), norm,
    )


@dataclass
class SceneBatch:
    scenes: list[PreparedScene]
    graph: LaneGraph
    actor_inputs: np.ndarray
    actor_locs: np.ndarray
    actor_groups: np.ndarray
    node_groups: np.ndarray
    agent_rows: np.ndarray
    gt: np.ndarray
    has_gt: np.ndarray


def collate(scenes: list[PreparedScene]) -> SceneBatch:
    """Stack scenes as disjoint graphs; attention never crosses scene groups."""
    counts = [len(s.actor_ids) for s in scenes]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    return SceneBatch(
        scenes=scenes,
        graph=LaneGraph.merge([s.graph for s in scenes]),
        actor_inputs=np.concatenate([s.actor_inputs for s in scenes]),
        actor_locs=np.concatenate([s.actor_locs for s in scenes]),
        actor_groups=np.repeat(np.arange(len(scenes)), counts),
        node_groups=np.repeat(np.arange(len(scenes)), [s.graph.num_nodes for s in scenes]),
        agent_rows=starts + np.array([s.agent_row for s in scenes], dtype=int),
        gt=np.concatenate([s.gt for s in scenes]),
        has_gt=np.concatenate([s.has_gt for s in scenes]),
    )


class LaneGCNModel(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        c = cfg.channels
        self.actor_net = ActorNet(ActorNetConfig(channels=c, steps=cfg.obs_steps), rng)
        spec = LaneConvSpec(c, cfg.dilations, cfg.multi_type)
        if cfg.use_map:
            self.node_net = NodeFeatureNet(c, rng)
            self.map_net = LaneGCN(spec, rng, cfg.lanegcn_blocks, cfg.residual)
        else:
            self.node_net = self.map_net = None
        self.fusion = FusionNet(FusionConfig(
            channels=c,
            a2l=cfg.use_map and cfg.a2l,
            l2l=cfg.use_map and cfg.l2l,
            l2a=cfg.use_map and cfg.l2a,
            a2a=cfg.a2a,
            a2l_radius=cfg.a2l_radius,
            l2a_radius=cfg.l2a_radius,
            a2a_radius=cfg.a2a_radius,
            dilations=cfg.dilations,
            multi_type=cfg.multi_type,
            residual=cfg.residual,
        ), rng)
        self.header = PredictionHeader(c, rng, cfg.num_modes, cfg.horizon,
                                       cfg.detach_endpoints)
        self.assign_names()

    def forward(self, batch: SceneBatch) -> Forecast:
        actors = self.actor_net(batch.actor_inputs)
        lanes = node_locs = None
        g = batch.graph
        if self.map_net is not None:
            lanes = self.map_net(self.node_net(g), g)
            node_locs = g.node_locations
        actors, _ = self.fusion(actors, batch.actor_locs, lanes, node_locs,
                                g if lanes is not None else None,
                                batch.actor_groups, batch.node_groups)
        return self.header(actors, batch.actor_locs)

    def loss(self, batch: SceneBatch, forecast: Forecast | None = None) -> LossBreakdown:
        forecast = self(batch) if forecast is None else forecast
        return total_loss(forecast, batch.gt, batch.has_gt, self.cfg.loss_config())


def predict(model: LaneGCNModel, scenarios, batch_size: int = 16,
            prepared: list[PreparedScene] | None = None) -> list[AgentForecast]:
    """World-frame agent forecasts, one per scenario, in input order."""
    scenes = prepared if prepared is not None else [prepare(s, model.cfg) for s in scenarios]
    out = []
    for i in range(0, len(scenes), batch_size):
        chunk = scenes[i:i + batch_size]
        batch = collate(chunk)
        fc = model(batch)
        traj, scores = fc.numpy()
        for scene, row in zip(chunk, batch.agent_rows):
            out.append(AgentForecast(scene.scenario_id,
                                     denormalize_forecast(traj[row], scene.frame),
                                     scores[row].copy()))
    return out


def agent_frame_forecasts(model: LaneGCNModel, scenes: list[PreparedScene],
                          batch_size: int = 16) -> list[tuple[np.ndarray, np.ndarray]]:
    """Agent forecasts left in each scene's agent frame (for training-set metrics)."""
    out = []
    for i in range(0, len(scenes), batch_size):
        batch = collate(scenes[i:i + batch_size])
        traj, scores = model(batch).numpy()
        out.extend((traj[r].copy(), scores[r].copy()) for r in batch.agent_rows)
    return out
