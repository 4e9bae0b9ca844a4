import numpy as np
import pytest

from conftest import chain_lane, dense_bool_power, dense_lane_oracle, random_lanes
from laneforecast.mapgraph import (
    KINDS,
    Lane,
    MapError,
    NodeFeatureNet,
    build_lane_graph,
    context_pairs,
    dilated_adjacency,
)
from laneforecast.numcore import ContractError, Tensor


def y_fork():
    """A 3-node trunk feeding two 3-node branches."""
    trunk = Lane("t", [[0, 0], [1, 0], [2, 0], [3, 0]], successors=["l", "r"])
    left = Lane("l", [[3, 0], [4, 1], [5, 2], [6, 3]])
    right = Lane("r", [[3, 0], [4, -1], [5, -2], [6, -3]])
    return build_lane_graph([trunk, left, right])


# construction

def test_single_lane_four_points():
    g = build_lane_graph([Lane("a", [[0, 0], [1, 0], [2, 0], [3, 0]])])
    assert g.num_nodes == 3
    assert g.adjacency["suc"].pattern() == {(0, 1), (1, 2)}
    assert g.adjacency["pre"].nnz == 2
    assert g.adjacency["left"].nnz == 0 and g.adjacency["right"].nnz == 0
    assert np.array_equal(g.node_locations, [[0.5, 0], [1.5, 0], [2.5, 0]])


def test_predecessor_link_across_lanes():
    b = Lane("B", [[0, 0], [1, 0], [2, 0]])
    a = Lane("A", [[2, 0], [3, 0], [4, 0]], predecessors=["B"])
    g = build_lane_graph([b, a])
    assert g.num_nodes == 4
    assert g.adjacency["suc"].pattern() == {(0, 1), (1, 2), (2, 3)}
    assert g.adjacency["pre"].pattern() == {(1, 0), (2, 1), (3, 2)}


def test_parallel_lanes_link_same_index_nodes():
    pts = [[0, 0], [1, 0], [2, 0], [3, 0]]
    a = Lane("a", pts, left="b")
    b = Lane("b", np.asarray(pts, float) + [0, 3], right="a")
    g = build_lane_graph([a, b])
    assert g.adjacency["left"].pattern() == {(0, 3), (1, 4), (2, 5)}
    assert g.adjacency["right"].pattern() == {(3, 0), (4, 1), (5, 2)}


def test_side_link_tie_goes_to_lowest_index():
    a = Lane("a", [[0, 0], [2, 0]], left="b")  # midpoint (1, 0)
    b = Lane("b", [[0, 1], [1, 1], [2, 1]])  # midpoints (0.5, 1), (1.5, 1): equidistant
    g = build_lane_graph([a, b])
    assert g.adjacency["left"].pattern() == {(0, 1)}


@pytest.mark.parametrize("lanes, message", [
    ([Lane("a", [[0, 0], [1, 0]], successors=["zz"])], "zz"),
    ([Lane("a", [[0, 0]])], "2 points"),
    ([Lane("a", [[0, 0], [0, 0]])], "coincide"),
    ([Lane("a", [[0, 0], [1, 0]]), Lane("a", [[0, 1], [1, 1]])], "duplicate"),
])
def test_map_errors(lanes, message):
    with pytest.raises(MapError, match=message):
        build_lane_graph(lanes)


def test_random_maps_match_loop_oracle(rng):
    for _ in range(100):
        lanes = random_lanes(rng)
        g = build_lane_graph(lanes)
        oracle = dense_lane_oracle(lanes)
        for kind in KINDS:
            assert np.array_equal(g.adjacency[kind].to_dense(), oracle[kind]), kind
        assert np.array_equal(g.adjacency["pre"].to_dense(), g.adjacency["suc"].to_dense().T)
        assert all(np.diff(g.adjacency[k].row_offsets).max(initial=0) <= 1 for k in ("left", "right"))
        assert sum(len(lane.centerline) - 1 for lane in lanes) == g.num_nodes
        assert np.array_equal(g.node_locations, (g.node_starts + g.node_ends) / 2)


def test_within_lane_superdiagonal():
    g = build_lane_graph([chain_lane(6)])
    assert np.array_equal(g.adjacency["suc"].to_dense(), np.eye(6, k=1))


def test_lane_list_reordering_is_a_node_permutation(rng):
    for _ in range(20):
        lanes = random_lanes(rng)
        g = build_lane_graph(lanes)
        order = rng.permutation(len(lanes))
        h = build_lane_graph([lanes[i] for i in order])
        # node of lane L at offset o moves to h.lane_slices[L][0] + o
        perm = np.empty(g.num_nodes, dtype=np.int64)
        for lane_id, (lo, hi) in g.lane_slices.items():
            perm[lo:hi] = np.arange(hi - lo) + h.lane_slices[lane_id][0]
        p = g.permute(perm)
        for kind in KINDS:
            assert p.adjacency[kind].pattern() == h.adjacency[kind].pattern()
        assert np.array_equal(p.node_locations, h.node_locations)


# dilation

def test_chain_of_40_at_k32():
    g = build_lane_graph([chain_lane(40)])
    d = dilated_adjacency(g, "suc", 32)
    assert d.pattern() == {(i, i + 32) for i in range(8)}


def test_dilation_k1_unchanged_and_cached():
    g = build_lane_graph([chain_lane(5)])
    assert g.dilated("pre", 1) is g.adjacency["pre"]
    assert g.dilated("suc", 4) is g.dilated("suc", 4)


def test_y_fork_two_steps_reaches_each_branch():
    g = y_fork()
    # from trunk node 1: step 1 to node 2, step 2 to first node of each branch (3 and 6)
    reach = {c for r, c in g.dilated("suc", 2).pattern() if r == 1}
    assert reach == {3, 6}


def test_y_fork_matches_bfs_depth():
    g = y_fork()
    suc = g.adjacency["suc"].to_dense()
    for k in (1, 2, 3, 4):
        for start in range(g.num_nodes):
            frontier = {start}
            for _ in range(k):
                frontier = {j for i in frontier for j in np.flatnonzero(suc[i])}
            assert {c for r, c in g.dilated("suc", k).pattern() if r == start} == frontier


@pytest.mark.parametrize("kind", ["left", "right"])
def test_dilating_side_links_is_contract_error(kind):
    with pytest.raises(ContractError, match="predecessor and successor"):
        dilated_adjacency(y_fork(), kind, 2)


def test_dilation_rejects_k0():
    with pytest.raises(ValueError):
        dilated_adjacency(y_fork(), "suc", 0)


def test_random_dilations_equal_dense_powers(rng):
    for _ in range(40):
        g = build_lane_graph(random_lanes(rng))
        for kind in ("pre", "suc"):
            dense = g.adjacency[kind].to_dense()
            for k in (2, 4, 8):
                assert np.array_equal(g.dilated(kind, k).to_dense(), dense_bool_power(dense, k))


# context pairs

def test_context_radius_is_strict():
    assert context_pairs([[0, 0]], [[3, 4]], 5.0).tolist() == []
    assert context_pairs([[0, 0]], [[3, 4]], 5.1).tolist() == [[0, 0]]


def test_context_pairs_vs_double_loop(rng):
    a, b = rng.uniform(-10, 10, (30, 2)), rng.uniform(-10, 10, (40, 2))
    expect = [[i, j] for i in range(30) for j in range(40)
              if np.sqrt(((b[j] - a[i]) ** 2).sum()) < 6.0]
    assert context_pairs(a, b, 6.0).tolist() == expect


def test_context_pairs_respect_groups():
    pairs = context_pairs([[0, 0], [0, 0]], [[1, 0], [1, 0]], 5.0, [0, 1], [1, 1])
    assert pairs.tolist() == [[1, 0], [1, 1]]


def test_context_pairs_empty_and_bad_radius():
    assert context_pairs(np.zeros((0, 2)), [[1, 1]], 3.0).shape == (0, 2)
    with pytest.raises(ValueError):
        context_pairs([[0, 0]], [[1, 1]], 0.0)


# node features

def test_zero_weights_give_zero_features(rng):
    net = NodeFeatureNet(8, rng)
    for p in net.parameters():
        p.data = np.zeros_like(p.data)
    assert not net(y_fork()).data.any()


def test_linear_identity_features(rng):
    g = y_fork()
    net = NodeFeatureNet(5, rng, norm=False)
    for lin in (net.shape_in, net.shape_out, net.loc_in, net.loc_out):
        lin.weight.data = np.eye(*lin.weight.shape)
        lin.bias.data[:] = 0.0
    expect = np.zeros((g.num_nodes, 5))
    expect[:, :2] = (g.node_ends - g.node_starts) + g.node_locations
    assert np.allclose(net(g).data, expect, atol=1e-15)


def test_features_equal_two_branch_oracle(rng):
    g = y_fork()
    net = NodeFeatureNet(8, rng)
    shape = net.shape_out(net.shape_in(Tensor(g.node_ends - g.node_starts))).data
    loc = net.loc_out(net.loc_in(Tensor(g.node_locations))).data
    assert np.array_equal(net(g).data, shape + loc)
