import math

import numpy as np
import pytest

from hlstm.config import ConfigError, ModelConfig, desk_preset, paper_preset
from hlstm.dataio import synthetic_dataset
from hlstm.metrics import average_precision, mean_accuracy, pixel_accuracy, relation_average_precision
from hlstm.model import HLSTM, param_group
from hlstm.mslstm import RelationGraphPrediction
from hlstm.training import (CheckpointError, batch_loss, evaluate, load_checkpoint, relation_loss,
                            save_checkpoint, sgd_step, surface_loss, total_loss, train)


@pytest.fixture(scope="module")
def tiny_data():
    return synthetic_dataset(3, size=16, seed=5, scales=(8, 32))


def tiny_config(**kw):
    base = dict(d=3, scales=[8, 32], conv_channels=[4, 4])
    base.update(kw)
    return desk_preset(**base)


def test_surface_loss_examples():
    assert surface_loss(np.eye(3)[:, :, None].transpose(1, 0, 2)[:, :, :], np.array([[0], [1], [2]])) == 0.0
    assert surface_loss(np.full((3, 2, 2), 1 / 3), np.zeros((2, 2), dtype=int)) == pytest.approx(math.log(3))
    pred = np.array([[[0.9], [0.5]], [[0.1], [0.5]]])  # (classes, H=2, W=1)
    assert surface_loss(pred, np.array([[0], [1]])) == pytest.approx((-math.log(0.9) - math.log(0.5)) / 2)
    assert surface_loss(pred, np.array([[0], [1]])) == pytest.approx(0.39925, abs=5e-6)
    with pytest.raises(ValueError):
        surface_loss(pred, np.array([[0], [2]]))


def test_relation_loss_examples():
    pairs = np.array([[0, 1], [1, 0]])
    onehot = RelationGraphPrediction(16, pairs, np.eye(4)[[1, 3]])
    assert relation_loss([onehot], [{(0, 1): 1, (1, 0): 3}]) == 0.0
    uni = RelationGraphPrediction(16, pairs, np.full((2, 4), 0.25))
    gt = {(0, 1): 0, (1, 0): 2}
    assert relation_loss([uni] * 5, [gt] * 5) == pytest.approx(5 * math.log(4))
    p = np.array([[0.4, 0.2, 0.2, 0.2], [0.1, 0.8, 0.05, 0.05]])
    two = RelationGraphPrediction(16, pairs, p)
    value = relation_loss([two], [{(0, 1): 0, (1, 0): 1}])
    assert value == pytest.approx((-math.log(0.4) - math.log(0.8)) / 2)
    assert value == pytest.approx(0.569717, abs=5e-7)
    with pytest.raises(ValueError):
        relation_loss([two], [{(0, 1): 0}])


def test_total_loss():
    assert total_loss([(0.0, 0.0)]) == 0.0
    assert total_loss([(0.25, 0.5)]) == 0.75
    assert total_loss([(0.4, 0.6), (1.0, 2.0)]) == 2.0
    with pytest.raises(ValueError):
        total_loss([])


def test_model_loss_matches_probability_losses(tiny_data):
    model = HLSTM(tiny_config())
    ex = tiny_data[0]
    loss, out = model.example_loss(ex)
    s = surface_loss(out.surface_probs(), ex.surface_gt)
    preds = [RelationGraphPrediction(rg.scale, rg.pairs, p)
             for rg, p in zip(ex.graphs, out.relation_probs())]
    r = relation_loss(preds, ex.relation_gt)
    assert float(loss.value) == pytest.approx(s + r, rel=1e-12)
    assert batch_loss(model, tiny_data[:2]) == pytest.approx(
        np.mean([float(model.example_loss(e)[0].value) for e in tiny_data[:2]]), rel=1e-14)


def test_sgd_examples():
    p = {"plstm0.ws": np.array(0.0)}
    g = {"plstm0.ws": np.array(1.0)}
    new, _ = sgd_step(p, {"plstm0.ws": np.array(0.0)}, {}, 0.1, 0.01)
    assert new["plstm0.ws"] == 0.0
    new, _ = sgd_step(p, g, {}, 0.1, 0.01, momentum=0.0)
    assert new["plstm0.ws"] == pytest.approx(-0.1)
    p1, v = sgd_step(p, g, {}, 0.1, 0.01, momentum=0.9)
    p2, _ = sgd_step(p1, g, v, 0.1, 0.01, momentum=0.9)
    assert p1["plstm0.ws"] == pytest.approx(-0.1) and p2["plstm0.ws"] == pytest.approx(-0.29)
    new, _ = sgd_step({"conv0.w": np.zeros(2)}, {"conv0.w": np.ones(2)}, {}, 0.1, 0.01, 0.0)
    assert np.allclose(new["conv0.w"], -0.01)
    with pytest.raises(ValueError):
        sgd_step({"conv0.w": np.zeros(2)}, {"conv0.w": np.ones(3)}, {}, 0.1, 0.01)


def test_parameter_groups():
    names = HLSTM(tiny_config()).params
    groups = {k: param_group(k) for k in names}
    assert groups["conv0.w"] == "cnn" and groups["transition.wh"] == "transition"
    assert groups["label.w"] == "plstm" and groups["relation1.b"] == "mslstm"
    assert set(groups.values()) == {"cnn", "transition", "plstm", "mslstm"}


def test_metric_examples():
    a = np.array([[0, 1], [2, 1]])
    assert pixel_accuracy(a, a) == 1.0 and mean_accuracy(a, a) == 1.0
    assert pixel_accuracy(np.array([[0, 0], [1, 1]]), np.array([[0, 1], [0, 1]])) == 0.5
    gt = np.array([0, 0, 0, 1])
    assert mean_accuracy(np.array([0, 0, 1, 1]), gt) == pytest.approx(5 / 6)
    with pytest.raises(ValueError):
        pixel_accuracy(np.zeros(3), np.zeros(4))


def test_ap_examples():
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(0.8333, abs=5e-5)
    assert average_precision([0.5] * 5, [1, 0, 0, 1, 0]) == pytest.approx(2 / 5)
    scores = np.array([[0.9, 0.1, 0, 0], [0.8, 0.2, 0, 0], [0.1, 0.9, 0, 0]])
    assert relation_average_precision(scores, np.array([0, 0, 1])) == 1.0
    mean, per = relation_average_precision(scores, np.array([0, 0, 1]), per_class=True)
    assert set(per) == {0, 1}


def test_checkpoint_roundtrip(tmp_path, tiny_data):
    model = HLSTM(tiny_config(seed=3))
    train(model, tiny_data, epochs=1)
    save_checkpoint(tmp_path / "a.ckpt", model)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.config == model.config
    for k in model.params:
        assert np.array_equal(back.params[k], model.params[k])
    save_checkpoint(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpt").read_bytes()[:8] == b"HLSTMCKP"
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.ckpt", tiny_config(d=4))
    (tmp_path / "bad.ckpt").write_bytes(b"nonsense")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")


def test_loss_non_increasing_single_example(tiny_data):
    model = HLSTM(tiny_config(lr_lstm=0.001, lr_cnn=0.0001, batch_size=0))
    log = train(model, tiny_data[:1], epochs=200)
    losses = np.array(log.step_losses)
    assert len(losses) == 200
    assert np.all(np.diff(losses) <= 1e-12)


def test_lr_decay_schedule(tiny_data):
    # decay factor 0 after every epoch: only epoch 0 moves the parameters
    model = HLSTM(tiny_config(lr_decay_every=1, lr_decay_factor=0.0, momentum=0.0, batch_size=0))
    start = {k: v.copy() for k, v in model.params.items()}
    snaps = []
    train(model, tiny_data[:1], epochs=3,
          callback=lambda e, h: snaps.append({k: v.copy() for k, v in model.params.items()}))
    assert any(not np.array_equal(start[k], snaps[0][k]) for k in start)
    for k in start:
        assert np.array_equal(snaps[0][k], snaps[2][k])


def test_evaluate_keys(tiny_data):
    model = HLSTM(tiny_config())
    res = evaluate(model, tiny_data)
    assert set(res) == {"pixel_accuracy", "mean_accuracy", "relation_ap", "relation_accuracy"}
    assert len(res["relation_ap"]) == 2


def test_config_validation_and_presets():
    assert paper_preset().d == 64 and paper_preset().scales == [16, 32, 48, 64, 128]
    assert paper_preset().lr_lstm == 0.001 and paper_preset().lr_cnn == 0.0001
    assert paper_preset().num_plstm_layers == 5 and paper_preset().N == 8
    desk = desk_preset()
    assert (desk.d, desk.num_plstm_layers, desk.scales) == (8, 2, [16, 64])
    assert ModelConfig.from_json(desk.to_json()) == desk
    for bad in (dict(d=0), dict(scales=[16, 16]), dict(scales=[16]), dict(N=4),
                dict(hidden_from_memory="x"), dict(pi_smooth=0)):
        with pytest.raises(ConfigError):
            desk_preset(**bad)
    with pytest.raises(ConfigError):
        ModelConfig.from_json("{")
    with pytest.raises(ConfigError):
        ModelConfig.from_json('{"bogus": 1}')
