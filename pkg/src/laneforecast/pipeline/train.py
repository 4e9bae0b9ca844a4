"""Mini-batch training with Adam and a one-step learning-rate decay."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..numcore import Parameter, Tape, backward
from .checkpoint import save_checkpoint
from .model import LaneGCNModel, PreparedScene, collate, prepare

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """The loss became NaN or infinite."""


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-3
    lr_decayed: float = 1e-4
    decay_epoch: int = 32
    epochs: int = 36
    max_steps: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    region_radius: float = 100.0

    def __post_init__(self):
        if self.decay_epoch >= self.epochs:
            raise ValueError("decay_epoch must come before the last epoch")

    @classmethod
    def for_steps(cls, steps: int, n_scenes: int, batch_size: int = 8, **kw) -> "TrainConfig":
        """Epoch budget that reaches ``steps`` updates; decays at the same 32/36 fraction."""
        per_epoch = -(-n_scenes // batch_size)
        epochs = max(2, -(-steps // per_epoch))
        decay = min(epochs - 1, max(1, int(round(epochs * 32 / 36))))
        return cls(batch_size=batch_size, epochs=epochs, decay_epoch=decay, max_steps=steps, **kw)

    def learning_rate(self, epoch: int) -> float:
        return self.lr if epoch < self.decay_epoch else self.lr_decayed


class Adam:
    def __init__(self, params: list[Parameter], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    cls_losses: list[float] = field(default_factory=list)
    reg_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    steps: int = 0
    epochs: int = 0

    def to_tsv(self) -> str:
        rows = ["step\tlr\tloss\tcls\treg"]
        for i, (lr, a, b, c) in enumerate(zip(self.learning_rates, self.losses,
                                               self.cls_losses, self.reg_losses)):
            rows.append(f"{i + 1}\t{lr:g}\t{a:.8f}\t{b:.8f}\t{c:.8f}")
        return "\n".join(rows) + "\n"


def train(corpus, model: LaneGCNModel, cfg: TrainConfig, out_dir=None,
          prepared: list[PreparedScene] | None = None,
          on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Optimize ``model`` in place on ``corpus``; returns the loss curve.

    Scenes are shuffled each epoch by a generator seeded from ``cfg.seed``.
    With ``out_dir`` the final checkpoint and the loss curve are written there.
    """
    scenes = prepared if prepared is not None else [prepare(s, model.cfg) for s in corpus]
    if not scenes:
        raise ValueError("training corpus is empty")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    res = TrainResult()
    out = Path(out_dir) if out_dir is not None else None
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        order = rng.permutation(len(scenes))
        for start in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and res.steps >= cfg.max_steps:
                break
            chunk = [scenes[i] for i in order[start:start + cfg.batch_size]]
            batch = collate(chunk)
            model.zero_grad()
            with Tape() as tape:
                parts = model.loss(batch)
            loss = parts.total.item()
            if not np.isfinite(loss):
                ids = [s.scenario_id for s in chunk]
                if out is not None:
                    out.mkdir(parents=True, exist_ok=True)
                    (out / "diverged_batch.json").write_text(json.dumps(
                        {"epoch": epoch, "step": res.steps + 1, "scenario_ids": ids,
                         "loss": repr(loss)}, indent=2))
                raise TrainingDiverged(f"non-finite loss at step {res.steps + 1} "
                                       f"(epoch {epoch}); batch scenarios: {ids}")
            backward(parts.total, tape)
            opt.step(lr)
            res.steps += 1
            res.losses.append(loss)
            res.cls_losses.append(parts.cls.item())
            res.reg_losses.append(parts.reg.item())
            res.learning_rates.append(lr)
            if on_step is not None:
                on_step(res.steps, loss)
        res.epochs = epoch + 1
        log.info("epoch %d lr %g loss %.4f", epoch + 1, lr,
                 res.losses[-1] if res.losses else float("nan"))
        if cfg.max_steps is not None and res.steps >= cfg.max_steps:
            break
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "model.ckpt", model.state_dict(),
                        {"model": model.cfg.to_dict(), "steps": res.steps, "epochs": res.epochs})
        (out / "loss_curve.tsv").write_text(res.to_tsv())
    return res
