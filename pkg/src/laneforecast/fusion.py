"""Actor/lane interaction stack: actor-to-lane, lane-to-lane, lane-to-actor, actor-to-actor.

The attention layer sums, over every context node ``j`` within a radius of
query ``i``, the term ``phi(concat(x_i, delta_ij, x_j) W1) W2`` and adds the
self term ``x_i W0``.  ``delta_ij`` embeds the offset ``v_j - v_i`` and ``phi``
is layer norm followed by ReLU.  No softmax or averaging is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lanegcn import LaneConvSpec, LaneGCN
from .mapgraph import LaneGraph, context_pairs
from .numcore import (
    LayerNorm,
    Linear,
    LinearNormReLU,
    Module,
    Tensor,
    concat,
    index_select,
    relu,
    scatter_add,
)


class AttentionLayer(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        c = channels
        self.w_self = Linear(c, c, rng, bias=False)
        self.delta = LinearNormReLU(2, c, rng)
        self.w_ctx = Linear(3 * c, c, rng, bias=False)
        self.ctx_norm = LayerNorm(c)
        self.w_out = Linear(c, c, rng, bias=False)

    def forward(self, x_q: Tensor, loc_q, x_k: Tensor, loc_k, pairs: np.ndarray) -> Tensor:
        y = self.w_self(x_q)
        if len(pairs) == 0:
            return y
        qi, kj = pairs[:, 0], pairs[:, 1]
        offsets = np.asarray(loc_k)[kj] - np.asarray(loc_q)[qi]
        feats = concat([index_select(x_q, qi), self.delta(Tensor(offsets)),
                        index_select(x_k, kj)], axis=1)
        msg = self.w_out(relu(self.ctx_norm(self.w_ctx(feats))))
        return y + scatter_add(msg, qi, x_q.shape[0])


def attention_aggregate(x_q: Tensor, loc_q, x_k: Tensor, loc_k, layer: AttentionLayer,
                        radius: float, groups_q=None, groups_k=None) -> Tensor:
    """Distance-gated attention of queries over keys closer than ``radius``."""
    pairs = context_pairs(loc_q, loc_k, radius, groups_q, groups_k)
    return layer(x_q, loc_q, x_k, loc_k, pairs)


class AttentionBlock(Module):
    """Attention, norm, ReLU, linear, norm, then shortcut and ReLU."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.att = AttentionLayer(channels, rng)
        self.att_norm = LayerNorm(channels)
        self.linear = Linear(channels, channels, rng, bias=False)
        self.linear_norm = LayerNorm(channels)

    def forward(self, x_q, loc_q, x_k, loc_k, pairs) -> Tensor:
        h = relu(self.att_norm(self.att(x_q, loc_q, x_k, loc_k, pairs)))
        return relu(self.linear_norm(self.linear(h)) + x_q)


class AttentionStage(Module):
    def __init__(self, channels: int, radius: float, rng: np.random.Generator, blocks: int = 2):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = radius
        self.blocks = [AttentionBlock(channels, rng) for _ in range(blocks)]

    def forward(self, x_q, loc_q, x_k, loc_k, groups_q=None, groups_k=None,
                keys_are_queries: bool = False) -> Tensor:
        pairs = context_pairs(loc_q, loc_k, self.radius, groups_q, groups_k)
        for block in self.blocks:
            x_q = block(x_q, loc_q, x_q if keys_are_queries else x_k, loc_k, pairs)
        return x_q


@dataclass
class FusionConfig:
    channels: int = 128
    a2l: bool = True
    l2l: bool = True
    l2a: bool = True
    a2a: bool = True
    a2l_radius: float = 7.0
    l2a_radius: float = 6.0
    a2a_radius: float = 100.0
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    multi_type: bool = True
    residual: bool = True


class FusionNet(Module):
    STAGES = ("a2l", "l2l", "l2a", "a2a")

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        self.cfg = cfg
        c = cfg.channels
        self.a2l = AttentionStage(c, cfg.a2l_radius, rng) if cfg.a2l else None
        self.l2l = (LaneGCN(LaneConvSpec(c, tuple(cfg.dilations), cfg.multi_type), rng,
                            residual=cfg.residual) if cfg.l2l else None)
        self.l2a = AttentionStage(c, cfg.l2a_radius, rng) if cfg.l2a else None
        self.a2a = AttentionStage(c, cfg.a2a_radius, rng) if cfg.a2a else None

    def forward(self, actors: Tensor, actor_locs, lanes: Tensor | None, node_locs,
                g: LaneGraph | None, actor_groups=None, node_groups=None):
        if lanes is not None and g is not None:
            if self.a2l is not None:
                lanes = self.a2l(lanes, node_locs, actors, actor_locs, node_groups, actor_groups)
            if self.l2l is not None:
                lanes = self.l2l(lanes, g)
            if self.l2a is not None:
                actors = self.l2a(actors, actor_locs, lanes, node_locs, actor_groups, node_groups)
        if self.a2a is not None:
            actors = self.a2a(actors, actor_locs, actors, actor_locs, actor_groups, actor_groups,
                              keys_are_queries=True)
        return actors, lanes


def fuse(actor_feats, actor_locs, lane_feats, node_locs, g, net: FusionNet,
         actor_groups=None, node_groups=None):
    """Run the enabled stages in order; returns updated (actor, lane) features."""
    return net(actor_feats, actor_locs, lane_feats, node_locs, g, actor_groups, node_groups)
