import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simnets.kernels import patch_svm_classify, patch_svm_scores
from simnets.mex import mex, mex_layer_forward
from simnets.network import (LossReport, PatchLabelingNet, mlp_scores, patch_svm_from_net, pool_index,
                             realize_avgpool, realize_maxpool, realize_relu, soft_variant)
from simnets.similarity import SimilarityParams
from simnets.tensor import ShapeError
from simnets.trainer import grad_check


def small_net(r, n=4, k=3, size=8, depth=1, patch=3, xi1=1.0, xi2=None, weighted=True, p=2.0, pool=(2, 2),
              pooling="mean", form="lp"):
    d = patch * patch * depth
    sim = SimilarityParams(form, r.standard_normal((n, d)), 0.2 * r.standard_normal((n, d)) if weighted else None, p)
    b = r.standard_normal((k, n) + pool)
    return PatchLabelingNet(sim, b, (size, size, depth), (patch, patch), 1, xi1, xi2,
                            trainable=("z", "v", "b", "p", "xi1", "xi2"), pooling=pooling)


def test_pool_index_quadrants():
    q = pool_index((27, 27), (2, 2))
    assert q.shape == (27 * 27,)
    grid = q.reshape(27, 27)
    # rows/cols below ceil(27/2) = 14 fall into the first half
    assert grid[13, 13] == 0 and grid[14, 13] == 2 and grid[13, 14] == 1 and grid[26, 26] == 3
    assert np.bincount(q).tolist() == [196, 182, 182, 169]


def test_forward_matches_generic_layers_and_reference(rng):
    for xi2 in (None, 0.6, -0.4):
        net = small_net(rng, xi2=xi2)
        imgs = rng.standard_normal((3, 8, 8, 1))
        out = net.forward(imgs)
        for i in range(3):
            np.testing.assert_allclose(out[i], net.forward_layers(imgs[i]), rtol=1e-12, atol=1e-12)
            # direct reference from the definition
            P = net.patches(imgs[i])[0]
            S = -(np.abs(P[:, None, :] - net.similarity.templates) ** 2 * net.similarity.weights).sum(-1)
            b = net.b.reshape(net.k, net.n, -1)[:, :, net.pool]  # (k, n, P)
            inner = mex(S.T[None] + b, net.xi1, axis=1)
            ref = inner.mean(-1) if xi2 is None else mex(inner, xi2, axis=-1)
            np.testing.assert_allclose(out[i], ref, rtol=1e-12, atol=1e-12)


def test_single_template_single_class(rng):
    net = small_net(rng, n=1, k=1, weighted=False)
    net.b[:] = 0.0
    img = rng.standard_normal((8, 8, 1))
    P = net.patches(img)[0]
    S = -np.sum((P - net.similarity.templates[0]) ** 2, axis=1)
    assert net.forward(img)[0] == pytest.approx(S.mean(), rel=1e-12)
    assert net.predict(img) == 0


def test_template_image_ties_to_class_zero(rng):
    net = small_net(rng, n=4, k=3, size=3, patch=3, pool=(1, 1))
    net.b[:] = rng.standard_normal(net.b.shape[1:])[None]
    img = net.similarity.templates[2].reshape(3, 3, 1)
    s = net.forward(img)
    assert s[0] == s[1] == s[2]
    assert net.predict(img) == 0


def test_predict_tie_break_and_argmax():
    net = small_net(np.random.default_rng(0), k=2)
    net.b[:] = 0.0
    img = np.zeros((8, 8, 1))
    assert net.predict(img) == 0
    net.b[1] += 0.5
    assert net.predict(img) == 1


def test_mean_limit_consistency(rng):
    net = small_net(rng)
    img = rng.standard_normal((2, 8, 8, 1))
    tiny = net.copy()
    tiny.xi2 = 1e-8
    np.testing.assert_allclose(net.forward(img), tiny.forward(img), atol=1e-6)


@given(st.integers(0, 10_000), st.floats(0.05, 3.0), st.booleans())
def test_collapsing_equivalence(seed, xi, neg):
    r = np.random.default_rng(seed)
    xi = -xi if neg else xi
    net = small_net(r, xi1=xi, xi2=xi)
    img = r.standard_normal((8, 8, 1))
    np.testing.assert_allclose(net.forward(img), net.collapsed_scores(img), rtol=0, atol=1e-10)


@given(st.integers(0, 10_000), st.floats(-20, 20))
def test_global_offset_shift(seed, t):
    r = np.random.default_rng(seed)
    net = small_net(r, xi2=0.7)
    img = r.standard_normal((8, 8, 1))
    s0 = net.forward(img)
    net.b += t
    np.testing.assert_allclose(net.forward(img), s0 + t, atol=1e-10)


def test_offset_sharing_locality(rng):
    # 4x4 image, 1x1 patches, 2x2 pool lattice; an image that is only nonzero in region 0
    net = small_net(rng, size=4, patch=1)
    imgs = [rng.standard_normal((4, 4, 1)) for _ in range(2)]
    s0 = [net.forward(x) for x in imgs]
    changed = net.copy()
    changed.b[:, :, 1, 1] += rng.standard_normal(changed.b.shape[:2])
    # the pooled score is a mean over regions, so only region 3's patches move; isolate them
    for x, s in zip(imgs, s0):
        P0 = net.patches(x)[0]
        mask = net.pool != 3
        inner0 = _inner(net, P0)[:, mask]
        inner1 = _inner(changed, P0)[:, mask]
        np.testing.assert_array_equal(inner0, inner1)


def _inner(net, P):
    S = -(np.abs(P[:, None, :] - net.similarity.templates) ** 2 * net.similarity.weights).sum(-1)
    b = net.b.reshape(net.k, net.n, -1)[:, :, net.pool]
    return mex(S.T[None] + b, net.xi1, axis=1)


def test_sum_pooling_scales_mean(rng):
    net = small_net(rng)
    s = small_net(np.random.default_rng(0), pooling="sum")
    s.similarity, s.b = net.similarity, net.b
    img = rng.standard_normal((8, 8, 1))
    np.testing.assert_allclose(s.forward(img), net.forward(img) * net.n_patches, rtol=1e-12)
    np.testing.assert_allclose(s.forward_layers(img), s.forward(img), rtol=1e-12)
    with pytest.raises(ValueError):
        small_net(rng, pooling="sum", xi2=0.5)


def test_patch_svm_equivalence(rng):
    for _ in range(10):
        xi = float(rng.uniform(0.2, 1.5))
        net = small_net(rng, n=3, k=3, size=5, patch=2, xi1=xi, xi2=xi, weighted=False)
        model = patch_svm_from_net(net)
        for _ in range(5):
            img = rng.standard_normal((5, 5, 1))
            X = list(net.patches(img)[0])
            # out(r) = (1/xi) log( sum alpha K / (n P) )
            svm = np.log(patch_svm_scores(X, model) / (net.n * net.n_patches)) / xi
            np.testing.assert_allclose(net.forward(img), svm, rtol=1e-9)
            assert net.predict(img) == patch_svm_classify(X, model)


def test_patch_svm_needs_kernel_form(rng):
    with pytest.raises(NotImplementedError):
        patch_svm_from_net(small_net(rng, xi2=1.0))
    with pytest.raises(ValueError):
        patch_svm_from_net(small_net(rng, weighted=False))


def test_geometry_errors(rng):
    sim = SimilarityParams("lp", rng.standard_normal((2, 9)))
    with pytest.raises(ShapeError):
        PatchLabelingNet(sim, np.zeros((2, 2, 1, 1)), (8, 8, 1), (2, 2))
    with pytest.raises(ShapeError):
        PatchLabelingNet(sim, np.zeros((2, 3, 1, 1)), (8, 8, 1), (3, 3))
    with pytest.raises(ShapeError):
        PatchLabelingNet(sim, np.zeros((2, 2, 9, 1)), (8, 8, 1), (3, 3))
    net = PatchLabelingNet(sim, np.zeros((2, 2, 1, 1)), (8, 8, 1), (3, 3))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((7, 8, 1)))


def test_loss_report_and_label_errors(rng):
    net = small_net(rng, k=2)
    net.b[:] = 0.0
    rep, _ = net.loss_and_backward(np.zeros((8, 8, 1)), 1)
    assert isinstance(rep, LossReport)
    assert rep.loss == pytest.approx(math.log(2), abs=1e-12)
    assert rep.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        net.loss_and_backward(np.zeros((8, 8, 1)), 2)


def test_confident_prediction_loss_vanishes(rng):
    net = small_net(rng, k=2, xi1=math.inf)
    net.b[1] -= 1e3
    rep, _ = net.loss_and_backward(rng.standard_normal((8, 8, 1)), 0)
    assert rep.loss < 1e-12


def test_frozen_groups_get_zero_gradients(rng):
    net = small_net(rng)
    net.trainable = {"b"}
    _, g = net.loss_and_backward(rng.standard_normal((2, 8, 8, 1)), [0, 1])
    assert g["b"].any()
    for name in ("z", "v", "p", "xi1"):
        assert not np.any(g[name])


@pytest.mark.parametrize("xi2", [None, 0.5])
def test_gradients_p2(xi2):
    r = np.random.default_rng(3)
    net = small_net(r, xi2=xi2)
    imgs = r.standard_normal((3, 8, 8, 1))
    errs = grad_check(net, imgs, [0, 1, 2], max_coords=40)
    assert max(errs.values()) < 1e-5, errs


def test_gradients_p1_with_kink_margin():
    r = np.random.default_rng(4)
    net = small_net(r, p=1.0)
    imgs = r.standard_normal((2, 8, 8, 1))
    errs = grad_check(net, imgs, [0, 2], max_coords=40, margin=1e-3)
    assert max(errs.values()) < 1e-4, errs


def test_linear_form_gradients():
    r = np.random.default_rng(5)
    net = small_net(r, form="linear", weighted=False)
    net.trainable = {"z", "b", "xi1"}
    errs = grad_check(net, r.standard_normal((2, 8, 8, 1)), [1, 0], max_coords=30)
    assert max(errs.values()) < 1e-5, errs


def test_checkpoint_round_trip(tmp_path, rng):
    net = small_net(rng, xi2=0.3)
    net.save(tmp_path / "net.simnet")
    back = PatchLabelingNet.load(tmp_path / "net.simnet")
    img = rng.standard_normal((8, 8, 1))
    np.testing.assert_array_equal(back.forward(img), net.forward(img))
    assert back.trainable == net.trainable and back.xi2 == 0.3
    raw = (tmp_path / "net.simnet").read_bytes()
    (tmp_path / "bad.simnet").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        PatchLabelingNet.load(tmp_path / "bad.simnet")


def test_mlp_scores_single_hidden_layer(rng):
    x = rng.standard_normal(4)
    sim = SimilarityParams("lp", rng.standard_normal((3, 4)))
    b = rng.standard_normal((2, 3))
    s = -np.sum((x - sim.templates) ** 2, axis=1)
    np.testing.assert_allclose(mlp_scores(x, sim, b, 0.9), mex(s[None] + b, 0.9, axis=1), rtol=1e-14)


# -- ConvNet realizations ----------------------------------------------------

def test_realize_relu():
    x = np.array([-1.0, 2.0, 0.0])
    np.testing.assert_array_equal(mex_layer_forward(x, realize_relu((3,))), [0.0, 2.0, 0.0])
    np.testing.assert_allclose(mex_layer_forward(x, soft_variant(realize_relu((3,)), 1e4)), [0, 2, 0], atol=1e-3)


def test_realize_pools():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    assert mex_layer_forward(x, realize_maxpool((2, 2, 1), 2, 2)).item() == 4.0
    assert mex_layer_forward(x, realize_avgpool((2, 2, 1), 2, 2)).item() == 2.5
    with pytest.raises(ShapeError):
        realize_maxpool((2, 2, 1), 3, 1)


def test_realize_pools_multichannel(rng):
    x = rng.standard_normal((5, 6, 2))
    out = mex_layer_forward(x, realize_maxpool((5, 6, 2), (2, 3), 1))
    ref = np.lib.stride_tricks.sliding_window_view(x, (2, 3), axis=(0, 1)).max(axis=(-1, -2))
    np.testing.assert_array_equal(out, ref)
    soft = mex_layer_forward(x, soft_variant(realize_avgpool((5, 6, 2), 2, 2), 1e-9))
    ref = x[:4, :6].reshape(2, 2, 3, 2, 2).mean(axis=(1, 3))
    np.testing.assert_allclose(soft, ref, atol=1e-6)
