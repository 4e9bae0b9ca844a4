"""LaneConv operators on typed lane adjacencies and the LaneGCN block stack.

The operator variants used for ablations are selected with two switches:

* ``multi_type`` keeps one weight matrix per connection type; without it all
  connections are merged into one symmetric adjacency and normalized as in a
  vanilla graph convolution ``D^-1/2 (I + A) D^-1/2 X W``.
* ``dilations`` lists the along-lane hop counts; ``(1,)`` disables dilation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapgraph import LaneGraph
from .numcore import (
    LayerNorm,
    Linear,
    Module,
    Parameter,
    ShapeError,
    SparseMatrix,
    Tensor,
    matmul,
    relu,
    sparse_dense_matmul,
)
from .numcore.nn import kaiming_uniform

PAPER_DILATIONS = (1, 2, 4, 8, 16, 32)


def _check_rows(x: Tensor, g: LaneGraph) -> None:
    if x.shape[0] != g.num_nodes:
        raise ShapeError(f"feature rows {x.shape[0]} != lane nodes {g.num_nodes}")


def laneconv(x: Tensor, g: LaneGraph, weights: dict) -> Tensor:
    """``X W_self + sum_i A_i X W_i`` over pre, suc, left and right."""
    _check_rows(x, g)
    y = matmul(x, weights["self"])
    for kind in ("pre", "suc", "left", "right"):
        y = y + sparse_dense_matmul(g.adjacency[kind], matmul(x, weights[kind]))
    return y


def dilated_laneconv(x: Tensor, g: LaneGraph, k: int, weights: dict) -> Tensor:
    """``X W_self + A_pre^k X W_pre + A_suc^k X W_suc`` with binarized powers."""
    _check_rows(x, g)
    y = matmul(x, weights["self"])
    for kind in ("pre", "suc"):
        y = y + sparse_dense_matmul(g.dilated(kind, k), matmul(x, weights[kind]))
    return y


def multiscale_laneconv(x: Tensor, g: LaneGraph, dilations, weights: dict) -> Tensor:
    """Left/right at one hop plus pre/suc terms for every dilation.

    ``weights`` holds ``"self"``, ``"left"``, ``"right"`` and ``("pre", k)`` /
    ``("suc", k)`` for each ``k`` in ``dilations``.
    """
    _check_rows(x, g)
    y = matmul(x, weights["self"])
    for kind in ("left", "right"):
        y = y + sparse_dense_matmul(g.adjacency[kind], matmul(x, weights[kind]))
    for k in dilations:
        for kind in ("pre", "suc"):
            y = y + sparse_dense_matmul(g.dilated(kind, k), matmul(x, weights[(kind, k)]))
    return y


def normalized_laplacian(adjacency: SparseMatrix) -> SparseMatrix:
    """``D^-1/2 (I + A) D^-1/2`` with ``D`` the row sums of ``I + A``."""
    n = adjacency.rows
    r, c, v = adjacency.coo()
    off = r != c
    rows = np.concatenate([np.arange(n), r[off]])
    cols = np.concatenate([np.arange(n), c[off]])
    vals = np.concatenate([np.ones(n), v[off]])
    with_self = SparseMatrix.from_coo(n, n, rows, cols, vals)
    deg = np.add.reduceat(with_self.values, with_self.row_offsets[:-1]) if n else np.zeros(0)
    scale = 1.0 / np.sqrt(deg)
    rr, cc, vv = with_self.coo()
    return SparseMatrix.from_coo(n, n, rr, cc, vv * scale[rr] * scale[cc])


def graphconv_baseline(x: Tensor, union: SparseMatrix, weight) -> Tensor:
    """Vanilla graph convolution ``L X W`` on the merged adjacency."""
    if x.shape[0] != union.rows:
        raise ShapeError(f"feature rows {x.shape[0]} != adjacency rows {union.rows}")
    return sparse_dense_matmul(normalized_laplacian(union), matmul(x, weight))


@dataclass
class LaneConvSpec:
    channels: int = 128
    dilations: tuple[int, ...] = PAPER_DILATIONS
    multi_type: bool = True

    def weight_count(self) -> int:
        if self.multi_type:
            return 1 + 2 + 2 * len(self.dilations)
        return len(self.dilations)


def _square(rng, c) -> Parameter:
    return Parameter(kaiming_uniform(rng, (c, c), c))


class MultiScaleLaneConv(Module):
    def __init__(self, spec: LaneConvSpec, rng: np.random.Generator):
        self.spec = spec
        c = spec.channels
        if spec.multi_type:
            self.w_self = _square(rng, c)
            self.w_left = _square(rng, c)
            self.w_right = _square(rng, c)
            self.w_pre = {str(k): _square(rng, c) for k in spec.dilations}
            self.w_suc = {str(k): _square(rng, c) for k in spec.dilations}
        else:
            self.w_graph = {str(k): _square(rng, c) for k in spec.dilations}

    def weights(self) -> dict:
        w = {"self": self.w_self, "left": self.w_left, "right": self.w_right}
        for k in self.spec.dilations:
            w[("pre", k)] = self.w_pre[str(k)]
            w[("suc", k)] = self.w_suc[str(k)]
        return w

    def laplacian(self, g: LaneGraph, k: int) -> SparseMatrix:
        key = ("laplacian", k)
        with g._lock:
            cached = g._dilated.get(key)
        if cached is None:
            cached = normalized_laplacian(g.union_adjacency(k))
            with g._lock:
                g._dilated[key] = cached
        return cached

    def forward(self, x: Tensor, g: LaneGraph) -> Tensor:
        if self.spec.multi_type:
            return multiscale_laneconv(x, g, self.spec.dilations, self.weights())
        _check_rows(x, g)
        y = None
        for k in self.spec.dilations:
            term = sparse_dense_matmul(self.laplacian(g, k), matmul(x, self.w_graph[str(k)]))
            y = term if y is None else y + term
        return y


class LaneGCNBlock(Module):
    """LaneConv, norm, ReLU; with ``residual`` also linear, norm and shortcut."""

    def __init__(self, spec: LaneConvSpec, rng: np.random.Generator, residual: bool = True):
        c = spec.channels
        self.conv = MultiScaleLaneConv(spec, rng)
        self.conv_norm = LayerNorm(c)
        self.residual = residual
        if residual:
            self.linear = Linear(c, c, rng, bias=False)
            self.linear_norm = LayerNorm(c)

    def forward(self, x: Tensor, g: LaneGraph) -> Tensor:
        h = relu(self.conv_norm(self.conv(x, g)))
        if not self.residual:
            return h
        return relu(self.linear_norm(self.linear(h)) + x)


class LaneGCN(Module):
    def __init__(self, spec: LaneConvSpec, rng: np.random.Generator, blocks: int = 4,
                 residual: bool = True):
        self.blocks = [LaneGCNBlock(spec, rng, residual) for _ in range(blocks)]

    def forward(self, x: Tensor, g: LaneGraph) -> Tensor:
        for block in self.blocks:
            x = block(x, g)
        return x


def lanegcn_forward(x: Tensor, g: LaneGraph, net: LaneGCN) -> Tensor:
    return net(x, g)
