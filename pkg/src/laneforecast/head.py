"""Multi-modal prediction header and the training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import (
    Linear,
    LinearNormReLU,
    LinearRes,
    Module,
    Tensor,
    concat,
    getitem,
    index_select,
    note_branch,
    relu,
    reshape,
    smooth_l1,
)


class NoSupervision(ValueError):
    """No actor in the batch has a complete ground-truth future."""


@dataclass
class LossConfig:
    alpha: float = 1.0
    margin: float = 0.2
    num_modes: int = 6
    horizon: int = 30

    def __post_init__(self):
        if self.margin <= 0 or self.alpha < 0:
            raise ValueError("need margin > 0 and alpha >= 0")


@dataclass
class Forecast:
    """``trajectories`` is M x K x H x 2, ``scores`` is M x K."""

    trajectories: Tensor
    scores: Tensor

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.trajectories.data, self.scores.data


class PredictionHeader(Module):
    def __init__(self, channels: int, rng: np.random.Generator, num_modes: int = 6,
                 horizon: int = 30, detach_endpoints: bool = True):
        c = channels
        self.num_modes = num_modes
        self.horizon = horizon
        self.detach_endpoints = detach_endpoints
        self.reg_res = LinearRes(c, c, rng)
        self.reg_out = Linear(c, num_modes * horizon * 2, rng)
        self.dist = LinearNormReLU(2, c, rng)
        self.cls_res = LinearRes(2 * c, c, rng)
        self.cls_out = Linear(c, 1, rng)

    def forward(self, feats: Tensor, origins) -> Forecast:
        m = feats.shape[0]
        k, h = self.num_modes, self.horizon
        origins = np.asarray(origins, dtype=np.float64).reshape(m, 1, 1, 2)
        offsets = reshape(self.reg_out(self.reg_res(feats)), (m, k, h, 2))
        traj = offsets + Tensor(origins)
        # by default endpoints enter the scorer as constants so that only the
        # positive mode's coordinates receive regression gradient
        ends = reshape(offsets[:, :, -1, :], (m * k, 2))
        if self.detach_endpoints:
            ends = ends.detach()
        rows = np.repeat(np.arange(m), k)
        joint = concat([self.dist(ends), index_select(feats, rows)], axis=1)
        scores = reshape(self.cls_out(self.cls_res(joint)), (m, k))
        return Forecast(traj, scores)


def predict_header(feats: Tensor, origins, header: PredictionHeader) -> Forecast:
    return header(feats, origins)


def positive_mode(traj: np.ndarray, gt: np.ndarray) -> int:
    """Mode whose final point is closest to the final ground truth; ties pick the lowest index."""
    traj = np.asarray(traj)
    gt = np.asarray(gt)
    d = np.linalg.norm(traj[:, -1, :] - gt[-1], axis=-1)
    return int(np.argmin(d))


def classification_loss(scores: Tensor, positives, margin: float = 0.2) -> Tensor:
    """Max-margin loss averaged over the M (K - 1) negative modes."""
    positives = np.asarray(positives, dtype=np.int64)
    m, k = scores.shape
    if k == 1 or m == 0:
        return scores.sum() * 0.0
    rows = np.arange(m)
    pos = reshape(getitem(scores, (rows, positives)), (m, 1))
    mask = np.ones((m, k))
    mask[rows, positives] = 0.0
    hinge = relu(scores + margin - pos) * Tensor(mask)
    return hinge.sum() * (1.0 / (m * (k - 1)))


def regression_loss(traj_pos: Tensor, gt) -> Tensor:
    """Smooth-l1 over both coordinates, averaged over actors and time steps."""
    gt = np.asarray(gt, dtype=np.float64)
    if traj_pos.shape != gt.shape:
        raise ValueError(f"shape mismatch {traj_pos.shape} vs {gt.shape}")
    m, h = gt.shape[0], gt.shape[1]
    if m == 0:
        return traj_pos.sum() * 0.0
    return smooth_l1(traj_pos - Tensor(gt)).sum() * (1.0 / (m * h))


@dataclass
class LossBreakdown:
    total: Tensor
    cls: Tensor
    reg: Tensor
    positives: np.ndarray

    def values(self) -> dict[str, float]:
        return {"total": self.total.item(), "cls": self.cls.item(), "reg": self.reg.item()}


def total_loss(forecast: Forecast, gt, has_gt, cfg: LossConfig | None = None) -> LossBreakdown:
    """Classification plus ``alpha`` times regression over actors with full futures."""
    cfg = cfg or LossConfig()
    gt = np.asarray(gt, dtype=np.float64)
    rows = np.flatnonzero(np.asarray(has_gt, dtype=bool))
    if len(rows) == 0:
        raise NoSupervision("no actor has a complete ground-truth future")
    traj = forecast.trajectories.data
    positives = np.array([positive_mode(traj[r], gt[r]) for r in rows], dtype=np.int64)
    note_branch(positives)
    scores = index_select(forecast.scores, rows)
    cls = classification_loss(scores, positives, cfg.margin)
    traj_pos = getitem(forecast.trajectories, (rows, positives))
    reg = regression_loss(traj_pos, gt[rows])
    return LossBreakdown(cls + reg * cfg.alpha, cls, reg, positives)
