import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment, minimize
from scipy.special import gammaln

from simnets.data import synthetic_mixture_dataset
from simnets.ggm import (GGMFitConfig, GGMixture, LocationPriors, fit_ggm, fit_location_priors, ggm_log_joint,
                         location_offsets, mixture_to_similarity_params)
from simnets.similarity import similarity_forward
from simnets.verify import planted_mixture


def _random_mixture(r, n=3, d=4):
    lam = r.dirichlet(np.ones(n))
    return GGMixture(lam, r.standard_normal((n, d)), r.uniform(0.3, 2.0, (n, d)), r.uniform(0.5, 3.0, n))


def test_gamma_spot_values():
    assert gammaln(1.0) == 0.0
    assert math.exp(gammaln(0.5)) == pytest.approx(math.sqrt(math.pi), rel=1e-12)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GGMixture([0.5, 0.6], np.zeros((2, 1)), np.ones((2, 1)), [2, 2])
    with pytest.raises(ValueError):
        GGMixture([1.0], np.zeros((1, 1)), np.zeros((1, 1)), [2])
    with pytest.raises(ValueError):
        GGMixture([1.0], np.zeros((1, 2)), np.ones((1, 1)), [2])


def test_log_joint_at_mean_is_constant(rng):
    mix = _random_mixture(rng)
    for l in range(3):
        assert ggm_log_joint(mix.means[l], mix, l) == mix.log_constants()[l]
    with pytest.raises(IndexError):
        ggm_log_joint(mix.means[0], mix, 3)


def test_one_dimensional_density_integrates_to_one(rng):
    mix = _random_mixture(rng, n=3, d=1)
    total = sum(quad(lambda t, l=l: math.exp(ggm_log_joint([t], mix, l)), -40, 40, points=[mix.means[l, 0]],
                     limit=200)[0] for l in range(3))
    assert total == pytest.approx(1.0, abs=1e-3)


@given(st.integers(0, 10_000))
def test_similarity_plus_constant_is_log_joint(seed):
    r = np.random.default_rng(seed)
    mix = _random_mixture(r)
    mix.shapes[:] = mix.shapes[0]
    sim = mixture_to_similarity_params(mix)
    assert sim.p == pytest.approx(mix.shapes[0])
    x = r.standard_normal((5, 4))
    s = similarity_forward(x, sim) + mix.log_constants()
    ref = np.array([[ggm_log_joint(xi, mix, l) for l in range(3)] for xi in x])
    np.testing.assert_allclose(s, ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(mix.log_joint(x), ref, rtol=0, atol=1e-12)


def test_mapping_examples():
    mix = GGMixture([1.0], np.zeros((1, 3)), np.ones((1, 3)), [2.0])
    sim = mixture_to_similarity_params(mix)
    np.testing.assert_allclose(sim.weights, 1.0)
    assert sim.p == 2.0
    mix = GGMixture([1.0], np.zeros((1, 2)), np.full((1, 2), 2.0), [1.0])
    np.testing.assert_allclose(mixture_to_similarity_params(mix).weights, 0.5)
    assert mixture_to_similarity_params(mix, p=2.0).p == 2.0


def test_single_gaussian_fit_is_mle(rng):
    X = rng.normal([1.0, -2.0], [0.5, 2.0], size=(4000, 2))
    mix = fit_ggm(X, 1, GGMFitConfig(fixed_beta=2.0, max_iter=5))
    np.testing.assert_allclose(mix.means[0], X.mean(0), rtol=1e-10)
    np.testing.assert_allclose(mix.scales[0], math.sqrt(2) * X.std(0), rtol=1e-10)

    # independent oracle: numerically maximize the density over (mu, log alpha)
    def nll(t):
        m = GGMixture([1.0], t[:2][None], np.exp(t[2:])[None], [2.0])
        return -m.log_likelihood(X) / len(X)
    res = minimize(nll, np.zeros(4), method="BFGS", options={"gtol": 1e-10})
    np.testing.assert_allclose(mix.means[0], res.x[:2], atol=1e-4)
    np.testing.assert_allclose(mix.scales[0], np.exp(res.x[2:]), rtol=1e-4)


def test_planted_recovery_and_monotone_likelihood():
    truth = planted_mixture(0)
    X, _ = synthetic_mixture_dataset(truth, 10_000, seed=1)
    mix = fit_ggm(X, 3, GGMFitConfig(seed=0))
    err = np.abs(truth.means[:, None, :] - mix.means[None]).max(axis=2)
    rows, cols = linear_sum_assignment(err)
    assert err[rows, cols].mean() < 0.1
    assert np.all(np.diff(mix.log_likelihood_trace) >= -1e-8 * len(X))
    np.testing.assert_allclose(np.sort(mix.shapes[cols]), np.sort(truth.shapes), atol=0.25)


def test_degenerate_data_hits_scale_floor():
    X = np.full((200, 3), 0.7)
    mix = fit_ggm(X, 1, GGMFitConfig(fixed_beta=2.0, max_iter=3))
    np.testing.assert_allclose(mix.scales, 1e-4)
    np.testing.assert_allclose(mix.means, 0.7)


def test_fit_preconditions():
    with pytest.raises(ValueError):
        fit_ggm(np.zeros((20, 2)), 3)


def test_location_priors_symmetric_data(rng):
    truth = planted_mixture(1)
    X, _ = synthetic_mixture_dataset(truth, 6000, seed=2)
    mix = fit_ggm(X, 3, GGMFitConfig(seed=0, max_iter=30))
    loc = np.arange(len(X)) % 4
    # same data at every location
    Xs = np.concatenate([X] * 2)
    locs = np.concatenate([np.zeros(len(X), int), np.ones(len(X), int)])
    pri = fit_location_priors(Xs, locs, mix, (1, 2))
    np.testing.assert_allclose(pri.priors[0, 0], pri.priors[0, 1], atol=1e-12)
    np.testing.assert_allclose(pri.priors[0, 0], mix.priors, atol=1e-3)
    np.testing.assert_allclose(pri.priors.sum(-1), 1.0, atol=1e-12)
    for trace in pri.log_likelihood_traces:
        assert np.all(np.diff(trace) >= -1e-9)
    empty = fit_location_priors(X, loc, mix, (3, 2))
    np.testing.assert_allclose(empty.priors[2, 1], 1 / 3)


def test_location_prior_planted():
    truth = planted_mixture(2)
    lp = np.array([[1.0, 0.0, 0.0], truth.priors])
    X, comps, locs = synthetic_mixture_dataset(truth, 8000, seed=3, location_priors=lp)
    assert np.all(comps[locs == 0] == 0)
    pri = fit_location_priors(X, locs, truth, (1, 2))
    assert pri.priors[0, 0, 0] > 0.9


def test_offsets_formula_and_identity(rng):
    n, d = 4, 3
    mix = GGMixture(np.full(n, 1 / n), rng.standard_normal((n, d)), np.ones((n, d)), np.ones(n))
    b = location_offsets(mix, LocationPriors(np.full((2, 2, n), 1 / n)))
    assert b.shape == (n, 2, 2)
    np.testing.assert_allclose(b, -math.log(n) + d * math.log(0.5), atol=1e-14)

    lam = rng.dirichlet(np.ones(n), size=(2, 2))
    b = location_offsets(mix, LocationPriors(lam))
    x = rng.standard_normal((6, d))
    s = similarity_forward(x, mixture_to_similarity_params(mix))
    for qh in range(2):
        for qw in range(2):
            local = GGMixture(lam[qh, qw], mix.means, mix.scales, mix.shapes)
            np.testing.assert_allclose(s + b[:, qh, qw], local.log_joint(x), rtol=0, atol=1e-12)


def test_suppressed_template_is_floored(rng):
    mix = GGMixture([0.5, 0.5], np.zeros((2, 2)), np.ones((2, 2)), [2.0, 2.0])
    b = location_offsets(mix, LocationPriors(np.array([[[1.0, 0.0]]])))
    assert b[1, 0, 0] == pytest.approx(math.log(1e-12) + mix.log_normalizers()[1])


def test_mixture_file_round_trip(tmp_path, rng):
    mix = _random_mixture(rng)
    mix.save(tmp_path / "m.ggm")
    header = (tmp_path / "m.ggm").read_bytes().split(b"\n", 1)[0]
    assert b'"beta"' in header and b'"lambda"' in header
    back = GGMixture.load(tmp_path / "m.ggm")
    for a, b in ((mix.priors, back.priors), (mix.means, back.means), (mix.scales, back.scales),
                 (mix.shapes, back.shapes)):
        np.testing.assert_array_equal(a, b)
