"""Finite-difference check of the assembled forecaster and parameter accounting."""

from __future__ import annotations

import numpy as np

from ..numcore import GradcheckReport, check_gradients
from .model import LaneGCNModel, ModelConfig, collate, prepare
from .synth import SynthSpec, synth_corpus


def jitter_parameters(model, scale: float = 0.1, seed: int = 0) -> None:
    """Move every parameter off its initial value.

    Fresh models have zero biases and unit gains, which puts some ReLU inputs
    exactly on the kink (an actor attending to itself has a zero offset).
    """
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data = p.data + scale * rng.standard_normal(p.shape)


def model_gradcheck(cfg: ModelConfig | None = None, seed: int = 0, entries: int = 2,
                    eps: float = 1e-5, topologies=("fork", "parallel"),
                    n_scenarios: int = 2) -> GradcheckReport:
    """Check every parameter of a jittered model on a small synthetic batch.

    The header's endpoint detach is switched off: a stop-gradient is invisible
    to finite differences, so with it on the two sides would measure different
    functions.
    """
    cfg = cfg or ModelConfig.tiny()
    if cfg.detach_endpoints:
        cfg = ModelConfig.from_dict({**cfg.to_dict(), "detach_endpoints": False})
    model = LaneGCNModel(cfg)
    jitter_parameters(model, seed=seed)
    scenes = synth_corpus(SynthSpec(n_scenarios=n_scenarios, seed=seed, topology=tuple(topologies)))
    batch = collate([prepare(s, cfg) for s in scenes])
    names, params = zip(*model.named_parameters())
    return check_gradients(lambda: model.loss(batch).total, params, names, eps=eps,
                           entries=entries, seed=seed)


def mapnet_parameter_counts(cfg: ModelConfig) -> tuple[int, int]:
    """MapNet parameter count without and with the residual linear branch."""
    counts = []
    for residual in (False, True):
        m = LaneGCNModel(ModelConfig.from_dict({**cfg.to_dict(), "residual": residual}))
        counts.append(m.node_net.num_parameters() + m.map_net.num_parameters())
    return counts[0], counts[1]
