import numpy as np
import pytest

from conftest import chain_lane, dense_bool_power, dense_lane_oracle, random_lanes
from laneforecast.lanegcn import (
    LaneConvSpec,
    LaneGCN,
    MultiScaleLaneConv,
    dilated_laneconv,
    graphconv_baseline,
    laneconv,
    multiscale_laneconv,
    normalized_laplacian,
)
from laneforecast.mapgraph import KINDS, Lane, build_lane_graph
from laneforecast.numcore import ShapeError, SparseMatrix, Tensor


def random_weights(rng, c, keys):
    return {k: Tensor(rng.standard_normal((c, c))) for k in keys}


def identity_weights(c, keys):
    w = {k: Tensor(np.eye(c)) for k in keys}
    w["self"] = Tensor(np.zeros((c, c)))
    return w


def random_graph(rng, max_nodes=20):
    while True:
        lanes = random_lanes(rng, max_nodes=max_nodes)
        g = build_lane_graph(lanes)
        if g.num_nodes > 1:
            return lanes, g


def two_lane_map():
    """Two parallel 20-node lanes, 40 nodes."""
    a = chain_lane(20, "a")
    b = chain_lane(20, "b", y=3.5)
    a.left, b.right = "b", "a"
    return build_lane_graph([a, b])


# laneconv

def test_isolated_nodes_give_self_term(rng):
    g = build_lane_graph([Lane("a", [[0, 0], [1, 0]]), Lane("b", [[5, 5], [6, 5]])])
    x = Tensor(rng.standard_normal((2, 4)))
    w = random_weights(rng, 4, ["self", *KINDS])
    assert np.allclose(laneconv(x, g, w).data, x.data @ w["self"].data, atol=1e-15)


def test_chain_of_three_hand_expansion():
    g = build_lane_graph([chain_lane(3)])
    y = laneconv(Tensor(np.eye(3)), g, identity_weights(3, KINDS)).data
    assert y[1].tolist() == [1.0, 0.0, 1.0]


def test_laneconv_vs_dense_oracle(rng):
    for _ in range(30):
        lanes, g = random_graph(rng)
        dense = dense_lane_oracle(lanes)
        x = rng.standard_normal((g.num_nodes, 5))
        w = random_weights(rng, 5, ["self", *KINDS])
        expect = x @ w["self"].data + sum(dense[k] @ x @ w[k].data for k in KINDS)
        assert np.abs(laneconv(Tensor(x), g, w).data - expect).max() <= 1e-12


def test_laneconv_shape_error(rng):
    g = build_lane_graph([chain_lane(3)])
    with pytest.raises(ShapeError):
        laneconv(Tensor(np.zeros((4, 2))), g, identity_weights(2, KINDS))


# dilated and multi-scale

def test_dilation_beyond_diameter_gives_self_term(rng):
    g = build_lane_graph([chain_lane(5)])
    x = Tensor(rng.standard_normal((5, 3)))
    w = random_weights(rng, 3, ["self", "pre", "suc"])
    assert np.allclose(dilated_laneconv(x, g, 8, w).data, x.data @ w["self"].data, atol=1e-15)


def test_chain_of_five_two_hops():
    g = build_lane_graph([chain_lane(5)])
    y = dilated_laneconv(Tensor(np.eye(5)), g, 2, identity_weights(5, ["pre", "suc"])).data
    assert y[2].tolist() == [1.0, 0.0, 0.0, 0.0, 1.0]


def test_dilated_vs_dense_power_oracle(rng):
    trunk = chain_lane(6, "t")
    trunk.successors = ["l", "r"]
    left = Lane("l", [[6, 0], [7, 1], [8, 2], [9, 3], [10, 4]])
    right = Lane("r", [[6, 0], [7, -1], [8, -2], [9, -3]])
    lanes = [trunk, left, right]
    g = build_lane_graph(lanes)
    dense = dense_lane_oracle(lanes)
    x = rng.standard_normal((g.num_nodes, 4))
    for k in (1, 2, 3, 4):
        w = random_weights(rng, 4, ["self", "pre", "suc"])
        expect = x @ w["self"].data + sum(
            dense_bool_power(dense[t], k) @ x @ w[t].data for t in ("pre", "suc"))
        assert np.abs(dilated_laneconv(Tensor(x), g, k, w).data - expect).max() <= 1e-12


def _multiscale_keys(dilations):
    return ["self", "left", "right"] + [(t, k) for k in dilations for t in ("pre", "suc")]


def test_multiscale_single_node(rng):
    g = build_lane_graph([Lane("a", [[0, 0], [1, 0]])])
    x = Tensor(rng.standard_normal((1, 3)))
    w = random_weights(rng, 3, _multiscale_keys((1, 2, 4)))
    assert np.allclose(multiscale_laneconv(x, g, (1, 2, 4), w).data, x.data @ w["self"].data)


def test_multiscale_with_one_dilation_is_laneconv(rng):
    lanes, g = random_graph(rng)
    x = Tensor(rng.standard_normal((g.num_nodes, 4)))
    w = random_weights(rng, 4, ["self", *KINDS])
    ms = {"self": w["self"], "left": w["left"], "right": w["right"],
          ("pre", 1): w["pre"], ("suc", 1): w["suc"]}
    assert np.allclose(multiscale_laneconv(x, g, (1,), ms).data, laneconv(x, g, w).data, atol=1e-12)


def test_multiscale_forty_nodes_vs_dense(rng):
    g = two_lane_map()
    adj = {k: g.adjacency[k].to_dense() for k in KINDS}
    dil = (1, 2, 4, 8, 16, 32)
    x = rng.standard_normal((40, 4))
    w = random_weights(rng, 4, _multiscale_keys(dil))
    expect = x @ w["self"].data + adj["left"] @ x @ w["left"].data + adj["right"] @ x @ w["right"].data
    for k in dil:
        for t in ("pre", "suc"):
            expect = expect + dense_bool_power(adj[t], k) @ x @ w[(t, k)].data
    assert np.abs(multiscale_laneconv(Tensor(x), g, dil, w).data - expect).max() <= 1e-12


def test_multiscale_is_linear(rng):
    g = two_lane_map()
    w = random_weights(rng, 3, _multiscale_keys((1, 4)))
    x1, x2 = rng.standard_normal((40, 3)), rng.standard_normal((40, 3))
    f = lambda x: multiscale_laneconv(Tensor(x), g, (1, 4), w).data
    assert np.allclose(f(2.0 * x1 - 0.5 * x2), 2.0 * f(x1) - 0.5 * f(x2), atol=1e-11)


def test_weight_count():
    assert LaneConvSpec().weight_count() == 15
    net = MultiScaleLaneConv(LaneConvSpec(channels=2), np.random.default_rng(0))
    assert len(net.parameters()) == 15


# graph convolution baseline

def test_graphconv_single_node(rng):
    x, w = rng.standard_normal((1, 3)), rng.standard_normal((3, 2))
    out = graphconv_baseline(Tensor(x), SparseMatrix.empty(1), Tensor(w))
    assert np.allclose(out.data, x @ w)


def test_graphconv_two_nodes_hand_laplacian():
    lap = normalized_laplacian(SparseMatrix.from_dense([[0, 1], [1, 0]]))
    assert np.allclose(lap.to_dense(), [[0.5, 0.5], [0.5, 0.5]])


def test_graphconv_vs_dense_oracle(rng):
    for _ in range(20):
        _, g = random_graph(rng)
        a = g.union_adjacency(1).to_dense()
        n = len(a)
        d = np.diag(1.0 / np.sqrt((np.eye(n) + a).sum(1)))
        x, w = rng.standard_normal((n, 3)), rng.standard_normal((3, 3))
        expect = d @ (np.eye(n) + a) @ d @ x @ w
        got = graphconv_baseline(Tensor(x), g.union_adjacency(1), Tensor(w)).data
        assert np.abs(got - expect).max() <= 1e-12


# stacked blocks

def test_zero_parameters_pass_input_through_shortcut(rng):
    g = two_lane_map()
    net = LaneGCN(LaneConvSpec(channels=4, dilations=(1, 2)), rng)
    for p in net.parameters():
        p.data = np.zeros_like(p.data)
    x = rng.standard_normal((40, 4))
    assert np.array_equal(net(Tensor(x), g).data, np.maximum(x, 0.0))


@pytest.mark.parametrize("multi_type, residual", [(True, True), (False, False)])
def test_lanegcn_node_permutation_equivariance(rng, multi_type, residual):
    lanes, g = random_graph(rng, max_nodes=30)
    net = LaneGCN(LaneConvSpec(6, (1, 2, 4), multi_type), rng, residual=residual)
    x = rng.standard_normal((g.num_nodes, 6))
    perm = rng.permutation(g.num_nodes)
    px = np.empty_like(x)
    px[perm] = x
    out = net(Tensor(x), g).data
    pout = net(Tensor(px), g.permute(perm)).data
    assert np.allclose(pout[perm], out, atol=1e-9)


def test_lanegcn_output_finite_for_large_inputs(rng):
    g = two_lane_map()
    net = LaneGCN(LaneConvSpec(8, (1, 2, 4, 8)), rng)
    for _ in range(1000):
        x = rng.uniform(-1e3, 1e3, (40, 8))
        assert np.isfinite(net(Tensor(x), g).data).all()


def test_ablation_switches_change_parameter_counts(rng):
    counts = {}
    for name, spec, res in [("full", LaneConvSpec(8), True),
                            ("no_multi_type", LaneConvSpec(8, multi_type=False), True),
                            ("no_dilation", LaneConvSpec(8, (1,)), True),
                            ("no_residual", LaneConvSpec(8), False)]:
        counts[name] = LaneGCN(spec, rng, residual=res).num_parameters()
    per_block = 64
    assert counts["full"] - counts["no_residual"] == 4 * (per_block + 16)
    assert counts["full"] - counts["no_dilation"] == 4 * 10 * per_block
    assert counts["full"] - counts["no_multi_type"] == 4 * 9 * per_block
