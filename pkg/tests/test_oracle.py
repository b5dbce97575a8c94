"""Exact-reference checks: closed-form expected error, Bayes posterior and
accuracy, and the brute-force per-timestep curve.

The closed form E[mean (eps - eps_hat)^2] for a single-Gaussian class is
validated against a direct Monte Carlo estimate; the Bayes quantities
against hand-computable densities.
"""

import numpy as np
import pytest
from scipy.stats import norm

from diffusion_classifier import (AnalyticDenoiser, ConfigurationError,
                                  FixedSingle, GaussianClass,
                                  GaussianClassModel, analytic_expected_error,
                                  bayes_accuracy, bayes_posterior_gmm,
                                  bayes_predict_batch, brute_force_elbo,
                                  derive_seed, estimate_errors,
                                  make_sample_set, make_schedule)


def _two_class(d=3, sep=4.0, var=1.0):
    m = np.zeros(d)
    m[0] = sep
    return GaussianClassModel((GaussianClass.single(np.zeros(d), var),
                               GaussianClass.single(m, var)))


def test_expected_error_is_alpha_bar_squared_at_the_mean():
    schedule = make_schedule("linear", 100)
    model = _two_class()
    for t in (1, 25, 50, 99):
        ab = schedule.alpha_bar(t)
        got = analytic_expected_error(model.classes[0].means[0], 0, t,
                                      schedule, model)
        assert got == pytest.approx(ab ** 2, rel=1e-12)


def test_expected_error_full_cov_encoding_agrees_with_diag():
    schedule = make_schedule("linear", 100)
    vars_ = np.array([0.5, 2.0, 1.0])
    diag = GaussianClassModel((GaussianClass(np.zeros((1, 3)),
                                             vars_[None, :], None, [1.0]),))
    full = GaussianClassModel((GaussianClass(np.zeros((1, 3)), None,
                                             np.diag(vars_)[None], [1.0]),))
    x = np.array([0.7, -1.2, 0.4])
    for t in (5, 50, 95):
        a = analytic_expected_error(x, 0, t, schedule, diag)
        b = analytic_expected_error(x, 0, t, schedule, full)
        assert a == pytest.approx(b, rel=1e-12)


def test_expected_error_matches_direct_monte_carlo():
    schedule = make_schedule("linear", 100)
    model = _two_class(var=0.6)
    den = AnalyticDenoiser(model, schedule)
    rng = np.random.default_rng(42)
    x = np.array([0.9, -0.3, 1.4])
    for t in (10, 60):
        n = 200000
        eps = rng.standard_normal((n, 3))
        ab = schedule.alpha_bar(t)
        x_ts = np.sqrt(ab) * x[None, :] + np.sqrt(1.0 - ab) * eps
        r = eps - den.predict_batch(x_ts, np.full(n, t), 1)
        per_draw = np.mean(r * r, axis=1)
        want = analytic_expected_error(x, 1, t, schedule, model)
        stderr = np.std(per_draw, ddof=1) / np.sqrt(n)
        assert abs(np.mean(per_draw) - want) < 3.0 * stderr


def test_mixture_fallback_is_seeded_and_consistent():
    schedule = make_schedule("linear", 100)
    g = GaussianClass.single(np.array([1.0, -1.0]), 0.8)
    # a two-component "mixture" of identical Gaussians denoises identically,
    # so the MC fallback must land on the single-class closed form
    twin = GaussianClass.mixture(np.stack([g.means[0], g.means[0]]),
                                 np.stack([g.diag_vars[0], g.diag_vars[0]]),
                                 [0.5, 0.5])
    model = GaussianClassModel((g, twin))
    x = np.array([0.4, 0.2])
    a = analytic_expected_error(x, 1, 30, schedule, model, mc_seed=3)
    assert a == analytic_expected_error(x, 1, 30, schedule, model, mc_seed=3)
    assert a != analytic_expected_error(x, 1, 30, schedule, model, mc_seed=4)
    exact = analytic_expected_error(x, 0, 30, schedule, model)
    assert a == pytest.approx(exact, rel=2e-2)


def test_expected_error_dimension_mismatch():
    schedule = make_schedule("linear", 100)
    with pytest.raises(ConfigurationError, match="elements"):
        analytic_expected_error(np.zeros(5), 0, 10, schedule, _two_class(d=3))


def test_brute_force_elbo_reuses_the_fixed_single_stream():
    schedule = make_schedule("linear", 50)
    model = _two_class()
    den = AnalyticDenoiser(model, schedule)
    x = np.array([0.5, 0.1, -0.2])
    curve = brute_force_elbo(x, 0, den, schedule, n_per_t=16, seed=9,
                             ts=[7, 20])
    for i, t in enumerate((7, 20)):
        ss = make_sample_set(FixedSingle(t), 16, 50, derive_seed(9, t),
                             x.shape)
        want = estimate_errors(x, [0], den, schedule, ss)[0]
        assert curve.errors[i] == want
    assert list(curve.ts) == [7, 20]
    assert curve.class_id == 0
    assert np.all(curve.stderrs > 0)
    assert curve.mean == pytest.approx(np.mean(curve.errors))


def test_class_error_gap_vanishes_at_both_ends():
    # the wrong-minus-right expected-error gap is the classification signal;
    # in closed form it peaks strictly inside [1, T] and collapses at both
    # extremes (t -> 1: both errors approach 1; t -> T: both approach 0)
    schedule = make_schedule("linear", 100)
    model = _two_class(sep=4.0)
    x = model.classes[0].means[0]
    ts = np.arange(1, 101)
    gap = np.array([analytic_expected_error(x, 1, t, schedule, model)
                    - analytic_expected_error(x, 0, t, schedule, model)
                    for t in ts])
    assert np.all(gap >= 0)
    k = int(np.argmax(gap))
    assert 0 < k < len(ts) - 1
    assert gap[k] > 10 * gap[0]
    assert gap[k] > 10 * gap[-1]


def test_bayes_posterior_matches_hand_densities():
    model = _two_class(d=1, sep=2.0, var=1.0)
    x = np.array([0.7])
    p0 = norm.pdf(0.7, loc=0.0)
    p1 = norm.pdf(0.7, loc=2.0)
    got = bayes_posterior_gmm(x, model)
    assert got[0] == pytest.approx(p0 / (p0 + p1), rel=1e-12)
    prior = np.array([0.9, 0.1])
    got = bayes_posterior_gmm(x, model, prior)
    assert got[0] == pytest.approx(0.9 * p0 / (0.9 * p0 + 0.1 * p1),
                                   rel=1e-12)


def test_bayes_predict_ties_resolve_to_lower_index():
    g = GaussianClass.single(np.zeros(2), 1.0)
    model = GaussianClassModel((g, g))
    pred = bayes_predict_batch(np.array([[0.3, -0.1], [5.0, 5.0]]), model)
    assert list(pred) == [0, 0]


def test_bayes_accuracy_matches_gaussian_separation():
    # two unit Gaussians sep apart: Bayes accuracy = Phi(sep / 2)
    for sep in (2.0, 6.0):
        model = _two_class(d=4, sep=sep)
        acc = bayes_accuracy(model, n_test=200000, seed=1)
        assert acc == pytest.approx(norm.cdf(sep / 2.0), abs=0.004)


def test_elbo_curve_csv(tmp_path):
    schedule = make_schedule("linear", 20)
    model = _two_class()
    den = AnalyticDenoiser(model, schedule)
    curve = brute_force_elbo(np.zeros(3), 0, den, schedule, n_per_t=4,
                             ts=[2, 9, 17], seed=0)
    path = tmp_path / "curve.csv"
    curve.write_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,class,error,stderr"
    assert len(lines) == 4
    t, cid, err, se = lines[1].split(",")
    assert (int(t), int(cid)) == (2, 0)
    assert float(err) == curve.errors[0]
    assert float(se) == curve.stderrs[0]


def test_brute_force_elbo_rejects_tiny_budget():
    schedule = make_schedule("linear", 20)
    den = AnalyticDenoiser(_two_class(), schedule)
    with pytest.raises(ConfigurationError, match="n_per_t"):
        brute_force_elbo(np.zeros(3), 0, den, schedule, n_per_t=1)
