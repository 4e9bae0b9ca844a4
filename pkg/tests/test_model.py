import copy

import numpy as np
import pytest

from conftest import rigid, transform_scene
from laneforecast.pipeline.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from laneforecast.pipeline.diagnostics import mapnet_parameter_counts
from laneforecast.pipeline.model import LaneGCNModel, ModelConfig, collate, predict, prepare
from laneforecast.pipeline.synth import SynthSpec, synth_corpus
from laneforecast.pipeline.train import Adam, TrainConfig, TrainingDiverged, train
from laneforecast.numcore import Parameter


@pytest.fixture(scope="module")
def scenes():
    return synth_corpus(SynthSpec(n_scenarios=4, seed=9, topology=("fork", "parallel", "merge")))


@pytest.fixture(scope="module")
def model():
    return LaneGCNModel(ModelConfig.tiny())


# assembly

def test_forecast_shapes(model, scenes):
    out = predict(model, scenes)
    assert len(out) == 4
    assert out[0].trajectories.shape == (6, 30, 2) and out[0].scores.shape == (6,)


def test_batching_matches_single_scenes(model, scenes):
    together = predict(model, scenes, batch_size=4)
    alone = predict(model, scenes, batch_size=1)
    for a, b in zip(together, alone):
        assert np.allclose(a.trajectories, b.trajectories, atol=1e-9)
        assert np.allclose(a.scores, b.scores, atol=1e-9)


def test_rigid_transform_equivariance(model, scenes, rng):
    base = predict(model, scenes)
    for s, f in zip(scenes, base):
        tf = rigid(rng.uniform(0, 2 * np.pi), rng.uniform(-200, 200, 2))
        (moved,) = predict(model, [transform_scene(s, tf)])
        assert np.abs(moved.trajectories - tf(f.trajectories)).max() <= 1e-6
        assert np.abs(moved.scores - f.scores).max() <= 1e-6


def test_actor_permutation_leaves_agent_forecast(model, scenes, rng):
    for s in scenes:
        shuffled = copy.deepcopy(s)
        shuffled.actors = [shuffled.actors[i] for i in rng.permutation(len(s.actors))]
        (a,) = predict(model, [s])
        (b,) = predict(model, [shuffled])
        assert np.abs(a.trajectories - b.trajectories).max() <= 1e-9


def test_actor_without_current_position_is_dropped(scenes):
    s = copy.deepcopy(scenes[0])
    extra = copy.deepcopy(s.actors[0])
    extra.id = "ghost"
    extra.observed[-1] = np.nan
    s.actors.append(extra)
    s.futures["ghost"] = s.futures["agent"]
    assert "ghost" not in prepare(s, ModelConfig.tiny()).actor_ids


def test_no_map_variant_runs(scenes):
    m = LaneGCNModel(ModelConfig.tiny(use_map=False))
    assert m.node_net is None
    assert np.isfinite(m.loss(collate([prepare(s, m.cfg) for s in scenes])).total.item())


def test_profiles():
    assert ModelConfig.paper().channels == 128 and ModelConfig.paper().dilations == (1, 2, 4, 8, 16, 32)
    assert ModelConfig.reduced().channels == 32 and ModelConfig.reduced().dilations == (1, 2, 4)
    cfg = ModelConfig.tiny(a2a=False)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_residual_parameter_overhead_reduced_profile():
    without, with_res = mapnet_parameter_counts(ModelConfig.reduced())
    assert with_res - without == 4 * 32 * 32 + 4 * 2 * 32
    assert (without, with_res) == (39552, 43904)


# training

def test_single_scene_loss_decreases(scenes):
    model = LaneGCNModel(ModelConfig.tiny())
    res = train(scenes[:1], model, TrainConfig.for_steps(200, 1, batch_size=1))
    assert res.steps == 200
    assert res.losses[-1] < res.losses[0]
    assert np.mean(res.losses[-10:]) < np.mean(res.losses[:10])


def test_training_is_reproducible(scenes):
    finals = []
    for _ in range(2):
        model = LaneGCNModel(ModelConfig.tiny())
        finals.append(train(scenes, model, TrainConfig.for_steps(15, 4, batch_size=2)).losses[-1])
    assert abs(finals[0] - finals[1]) <= 1e-9


def test_learning_rate_schedule():
    cfg = TrainConfig()
    assert [cfg.learning_rate(e) for e in (0, 31, 32, 35)] == [1e-3, 1e-3, 1e-4, 1e-4]
    short = TrainConfig.for_steps(360, 10, batch_size=1)
    assert (short.epochs, short.decay_epoch) == (36, 32)
    with pytest.raises(ValueError):
        TrainConfig(decay_epoch=36, epochs=36)


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -3.0])
    Adam([p]).step(0.1)
    assert np.allclose(p.data, [0.9, -1.9], atol=1e-7)


def test_divergence_aborts_with_dump(scenes, tmp_path):
    model = LaneGCNModel(ModelConfig.tiny())
    model.header.reg_out.bias.data[:] = np.nan
    with pytest.raises(TrainingDiverged, match="step 1"):
        train(scenes, model, TrainConfig.for_steps(3, 4, batch_size=2), out_dir=tmp_path)
    dump = (tmp_path / "diverged_batch.json").read_text()
    assert '"scenario_ids"' in dump and '"step": 1' in dump


def test_empty_corpus():
    with pytest.raises(ValueError):
        train([], LaneGCNModel(ModelConfig.tiny()), TrainConfig())


# checkpoints

def test_checkpoint_round_trip(model, scenes, tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", model.state_dict(), {"model": model.cfg.to_dict()})
    state, meta = load_checkpoint(tmp_path / "m.ckpt")
    clone = LaneGCNModel(ModelConfig.from_dict(meta["model"]))
    clone.load_state_dict(state)
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), clone.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)
    a, b = predict(model, scenes[:1]), predict(clone, scenes[:1])
    assert np.array_equal(a[0].trajectories, b[0].trajectories)


def test_checkpoint_byte_layout(tmp_path):
    save_checkpoint(tmp_path / "x.ckpt", {"w": np.array([[1.0, 2.0]])}, {})
    raw = (tmp_path / "x.ckpt").read_bytes()
    assert raw[:8] == b"LGCNCKPT"
    assert raw[8:16] == bytes([1, 0, 0, 0, 2, 0, 0, 0]) and raw[16:18] == b"{}"
    assert raw[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_checkpoint_errors(tmp_path, model):
    (tmp_path / "bad").write_bytes(b"NOTACKPT")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad")
    save_checkpoint(tmp_path / "ok", model.state_dict())
    raw = (tmp_path / "ok").read_bytes()
    (tmp_path / "short").write_bytes(raw[:-20])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short")
    (tmp_path / "v2").write_bytes(raw[:8] + bytes([2, 0, 0, 0]) + raw[12:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v2")
