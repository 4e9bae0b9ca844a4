"""Lane graphs built from vectorized lane centerlines.

Every pair of consecutive centerline points becomes one lane node.  Nodes are
connected by four typed adjacencies; ``adjacency[kind][j, k] == 1`` when node
``k`` is a ``kind`` neighbour of node ``j``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .numcore import (
    LinearNormReLU,
    Linear,
    Module,
    SparseMatrix,
    Tensor,
    block_diag,
    sparse_power,
    sparse_union,
)
from .numcore.tensor import ContractError

KINDS = ("pre", "suc", "left", "right")


class MapError(ValueError):
    """Malformed vectorized map data."""


@dataclass
class Lane:
    id: str
    centerline: np.ndarray
    predecessors: list[str] = field(default_factory=list)
    successors: list[str] = field(default_factory=list)
    left: str | None = None
    right: str | None = None

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=np.float64).reshape(-1, 2)


@dataclass
class LaneGraph:
    node_starts: np.ndarray
    node_ends: np.ndarray
    adjacency: dict[str, SparseMatrix]
    node_to_lane: list[str]
    lane_slices: dict[str, tuple[int, int]] = field(default_factory=dict)
    _dilated: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.node_starts)

    @property
    def node_locations(self) -> np.ndarray:
        return (self.node_starts + self.node_ends) / 2.0

    def dilated(self, kind: str, k: int) -> SparseMatrix:
        return dilated_adjacency(self, kind, k)

    def union_adjacency(self, k: int = 1) -> SparseMatrix:
        """Symmetrized OR of the along-lane powers at ``k`` (plus left/right when k=1)."""
        key = ("union", k)
        with self._lock:
            cached = self._dilated.get(key)
        if cached is None:
            mats = [self.dilated("pre", k), self.dilated("suc", k)]
            if k == 1:
                mats += [self.adjacency["left"], self.adjacency["right"]]
            cached = sparse_union(mats, symmetric=True)
            with self._lock:
                self._dilated[key] = cached
        return cached

    def precompute(self, dilations, union: bool = False) -> "LaneGraph":
        for k in dilations:
            self.dilated("pre", k)
            self.dilated("suc", k)
            if union:
                self.union_adjacency(k)
        return self

    def permute(self, perm) -> "LaneGraph":
        """Relabel nodes so that old node ``i`` becomes node ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.argsort(perm)
        return LaneGraph(
            node_starts=self.node_starts[inverse],
            node_ends=self.node_ends[inverse],
            adjacency={k: a.permute(perm) for k, a in self.adjacency.items()},
            node_to_lane=[self.node_to_lane[i] for i in inverse],
        )

    @staticmethod
    def merge(graphs: list["LaneGraph"]) -> "LaneGraph":
        """Disjoint union with block-diagonal adjacencies; shared caches carry over."""
        if len(graphs) == 1:
            return graphs[0]
        merged = LaneGraph(
            node_starts=np.concatenate([g.node_starts for g in graphs]).reshape(-1, 2),
            node_ends=np.concatenate([g.node_ends for g in graphs]).reshape(-1, 2),
            adjacency={k: block_diag([g.adjacency[k] for g in graphs]) for k in KINDS},
            node_to_lane=[lane for g in graphs for lane in g.node_to_lane],
        )
        shared = set.intersection(*(set(g._dilated) for g in graphs)) if graphs else set()
        for key in shared:
            merged._dilated[key] = block_diag([g._dilated[key] for g in graphs])
        return merged


def build_lane_graph(lanes: list[Lane]) -> LaneGraph:
    """Split centerlines into segment nodes and derive the four adjacencies."""
    by_id: dict[str, Lane] = {}
    for lane in lanes:
        if lane.id in by_id:
            raise MapError(f"duplicate lane id {lane.id!r}")
        if len(lane.centerline) < 2:
            raise MapError(f"lane {lane.id!r}: centerline needs at least 2 points")
        if np.any(np.all(np.diff(lane.centerline, axis=0) == 0, axis=1)):
            raise MapError(f"lane {lane.id!r}: consecutive centerline points coincide")
        by_id[lane.id] = lane
    for lane in lanes:
        refs = list(lane.predecessors) + list(lane.successors) + [lane.left, lane.right]
        for ref in refs:
            if ref is not None and ref not in by_id:
                raise MapError(f"lane {lane.id!r} references unknown lane {ref!r}")

    starts, ends, owner = [], [], []
    slices: dict[str, tuple[int, int]] = {}
    n = 0
    for lane in lanes:
        pts = lane.centerline
        m = len(pts) - 1
        starts.append(pts[:-1])
        ends.append(pts[1:])
        owner.extend([lane.id] * m)
        slices[lane.id] = (n, n + m)
        n += m
    node_starts = np.concatenate(starts) if starts else np.zeros((0, 2))
    node_ends = np.concatenate(ends) if ends else np.zeros((0, 2))
    locs = (node_starts + node_ends) / 2.0

    suc_r, suc_c = [], []
    for lo, hi in slices.values():
        suc_r.extend(range(lo, hi - 1))
        suc_c.extend(range(lo + 1, hi))
    links = set()
    for lane in lanes:
        for s in lane.successors:
            links.add((lane.id, s))
        for p in lane.predecessors:
            links.add((p, lane.id))
    for src, dst in sorted(links):
        suc_r.append(slices[src][1] - 1)
        suc_c.append(slices[dst][0])
    suc = SparseMatrix.from_coo(n, n, suc_r, suc_c).binarize()

    side: dict[str, tuple[list[int], list[int]]] = {"left": ([], []), "right": ([], [])}
    for lane in lanes:
        lo, hi = slices[lane.id]
        for kind, other in (("left", lane.left), ("right", lane.right)):
            if other is None:
                continue
            olo, ohi = slices[other]
            d = np.linalg.norm(locs[lo:hi, None, :] - locs[None, olo:ohi, :], axis=-1)
            # argmin keeps the first (smallest index) among exact ties
            side[kind][0].extend(range(lo, hi))
            side[kind][1].extend((olo + np.argmin(d, axis=1)).tolist())

    adjacency = {
        "suc": suc,
        "pre": suc.transpose(),
        "left": SparseMatrix.from_coo(n, n, *side["left"]).binarize(),
        "right": SparseMatrix.from_coo(n, n, *side["right"]).binarize(),
    }
    return LaneGraph(node_starts, node_ends, adjacency, owner, slices)


def dilated_adjacency(g: LaneGraph, kind: str, k: int) -> SparseMatrix:
    """Binarized ``k``-step reachability along predecessor or successor links."""
    if kind not in ("pre", "suc"):
        raise ContractError(f"dilation is only used for predecessor and successor, not {kind!r}")
    if k < 1:
        raise ValueError(f"dilation must be >= 1, got {k}")
    if k == 1:
        return g.adjacency[kind]
    key = (kind, k)
    with g._lock:
        cached = g._dilated.get(key)
    if cached is None:
        cached = sparse_power(g.adjacency[kind], k, binarize=True)
        with g._lock:
            g._dilated[key] = cached
    return cached


def context_pairs(locs_a, locs_b, radius: float, groups_a=None, groups_b=None) -> np.ndarray:
    """Index pairs ``(i, j)`` with ``||b_j - a_i|| < radius``, row-major ordered.

    When group labels are given only pairs within the same group qualify.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    a = np.asarray(locs_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(locs_b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    diff = b[None, :, :] - a[:, None, :]
    close = np.sqrt((diff * diff).sum(-1)) < radius
    if groups_a is not None:
        close &= np.asarray(groups_a)[:, None] == np.asarray(groups_b)[None, :]
    i, j = np.nonzero(close)
    return np.stack([i, j], axis=1).astype(np.int64)


class NodeFeatureNet(Module):
    """Encodes a node from its segment vector and its center location."""

    def __init__(self, channels: int, rng: np.random.Generator, norm: bool = True):
        self.shape_in = LinearNormReLU(2, channels, rng) if norm else Linear(2, channels, rng)
        self.shape_out = Linear(channels, channels, rng)
        self.loc_in = LinearNormReLU(2, channels, rng) if norm else Linear(2, channels, rng)
        self.loc_out = Linear(channels, channels, rng)

    def forward(self, g: LaneGraph) -> Tensor:
        seg = Tensor(g.node_ends - g.node_starts)
        loc = Tensor(g.node_locations)
        return self.shape_out(self.shape_in(seg)) + self.loc_out(self.loc_in(loc))


def node_features(g: LaneGraph, net: NodeFeatureNet) -> Tensor:
    return net(g)
