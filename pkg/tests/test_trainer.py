import numpy as np
import pytest
from hypothesis import given, strategies as st

from simnets.data import LabeledImageSet
from simnets.network import PatchLabelingNet
from simnets.similarity import SimilarityParams
from simnets.trainer import DivergenceError, SgdConfig, evaluate, grad_check, sgd_step, train


def tiny_net(seed=0, k=3, n=4):
    r = np.random.default_rng(seed)
    sim = SimilarityParams("lp", r.standard_normal((n, 9)), np.zeros((n, 9)), 2.0)
    return PatchLabelingNet(sim, np.zeros((k, n, 2, 2)), (6, 6, 1), (3, 3))


def tiny_data(N=12, k=3, seed=1):
    r = np.random.default_rng(seed)
    return LabeledImageSet(r.standard_normal((N, 6, 6, 1)), np.arange(N) % k)


def test_config_validation_and_schedule():
    with pytest.raises(ValueError):
        SgdConfig(batch_size=0)
    with pytest.raises(ValueError):
        SgdConfig(momentum=1.0)
    with pytest.raises(NotImplementedError):
        SgdConfig(nesterov=True)
    c = SgdConfig(learning_rate=0.01, decay_factor=0.1, decay_epoch=50)
    assert c.lr(0) == c.lr(49) == 0.01
    assert c.lr(50) == pytest.approx(1e-3)
    assert c.lr(100) == pytest.approx(1e-4)
    assert c.decay_for("z") == 0.0 and c.decay_for("b") == c.decay_for("v") == 1e-4
    assert c.decay_for("p") == c.decay_for("xi1") == 0.0


def test_plain_gradient_descent():
    theta, g = np.array([1.0, -2.0]), np.array([0.5, 0.25])
    p, _ = sgd_step({"b": theta}, {"b": g}, {}, SgdConfig(momentum=0.0, weight_decay=0.0, learning_rate=0.1), 0)
    np.testing.assert_allclose(p["b"], theta - 0.1 * g, rtol=1e-15)


def test_zero_gradient_no_decay_is_identity():
    theta = np.array([3.0])
    p, v = sgd_step({"b": theta}, {"b": np.zeros(1)}, {}, SgdConfig(weight_decay=0.0), 0)
    np.testing.assert_array_equal(p["b"], theta)
    np.testing.assert_array_equal(v["b"], 0.0)


def test_two_momentum_steps_on_quadratic():
    cfg = SgdConfig(momentum=0.9, learning_rate=0.1, weight_decay=0.0)
    params, vel = {"b": np.array(1.0)}, {}
    for _ in range(2):
        params, vel = sgd_step(params, {"b": 2 * params["b"]}, vel, cfg, 0)
    # by hand: v1 = -0.2, th1 = 0.8; v2 = 0.9*(-0.2) - 0.1*1.6 = -0.34, th2 = 0.46
    assert float(params["b"]) == pytest.approx(0.46, abs=1e-15)
    assert float(vel["b"]) == pytest.approx(-0.34, abs=1e-15)


def test_non_finite_gradient_names_group():
    with pytest.raises(DivergenceError, match="'v'"):
        sgd_step({"v": np.zeros(2)}, {"v": np.array([0.0, np.inf])}, {}, SgdConfig(), 0)


@given(st.floats(0.0, 1.0), st.floats(1e-3, 1.0))
def test_templates_never_decayed(wd, lr):
    theta = np.array([2.0, -1.0])
    cfg = SgdConfig(weight_decay=wd, learning_rate=lr)
    p, _ = sgd_step({"z": theta, "b": theta}, {"z": np.zeros(2), "b": np.zeros(2)}, {}, cfg, 0)
    np.testing.assert_array_equal(p["z"], theta)
    np.testing.assert_allclose(p["b"], theta * (1 - lr * wd), rtol=1e-14)


def test_zero_learning_rate_leaves_parameters(rng):
    net = tiny_net()
    before = {k: np.array(v) for k, v in net.parameters().items()}
    train(net, tiny_data(), SgdConfig(learning_rate=0.0, epochs=3, batch_size=5))
    for k, v in net.parameters().items():
        np.testing.assert_array_equal(v, before[k])


def test_training_is_deterministic(tmp_path):
    runs = []
    for i in range(2):
        net = tiny_net()
        h = train(net, tiny_data(), SgdConfig(learning_rate=0.5, epochs=3, batch_size=5, seed=7),
                  history_path=tmp_path / f"h{i}.csv")
        runs.append((net.parameters(), [(r.loss, r.train_acc) for r in h.records]))
    assert runs[0][1] == runs[1][1]
    for k in runs[0][0]:
        np.testing.assert_array_equal(runs[0][0][k], runs[1][0][k])
    a = [l.split(",")[:4] for l in (tmp_path / "h0.csv").read_text().splitlines()]
    b = [l.split(",")[:4] for l in (tmp_path / "h1.csv").read_text().splitlines()]
    assert a == b and a[0] == ["epoch", "loss", "train_acc", "val_acc"]


def test_single_sample_overfit():
    net = tiny_net()
    data = tiny_data(N=1)
    h = train(net, data, SgdConfig(learning_rate=1.0, epochs=50, batch_size=1, weight_decay=0.0))
    losses = np.array(h.losses)
    assert np.mean(np.diff(losses) < 0) >= 0.9
    assert losses[-1] < 0.1
    assert len(h) == 50


def test_train_rejects_empty_and_logs():
    with pytest.raises(ValueError):
        train(tiny_net(), LabeledImageSet(np.zeros((0, 6, 6, 1)), []), SgdConfig())
    seen = []
    train(tiny_net(), tiny_data(), SgdConfig(epochs=2, learning_rate=0.1), validation=tiny_data(seed=2),
          log=seen.append)
    assert [r.epoch for r in seen] == [0, 1]
    assert 0.0 <= seen[-1].val_acc <= 1.0


def test_evaluate_single_class():
    net = tiny_net(k=1)
    assert evaluate(net, tiny_data(k=1)) == 1.0
    with pytest.raises(ValueError):
        evaluate(net, LabeledImageSet(np.zeros((0, 6, 6, 1)), []))


def test_grad_check_frozen_groups_report_zero():
    net = tiny_net()
    net.trainable = {"b"}
    d = tiny_data(N=3)
    net.b[:] = np.random.default_rng(0).standard_normal(net.b.shape)
    rep = grad_check(net, d.images, d.labels, max_coords=20)
    assert rep["z"] == 0.0 and rep["v"] == 0.0 and rep["p"] == 0.0
    assert 0 < rep["b"] < 1e-5
