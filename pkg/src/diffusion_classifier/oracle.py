"""Exact references the Monte Carlo classifier is checked against.

For Gaussian-mixture class conditionals everything here is computable in
closed form: the Bayes posterior over classes, the Bayes-optimal accuracy,
and the expected denoising error

    E_eps[ mean (eps - eps_hat(x_t, t, c))^2 ]
      = ( ||sqrt(ab) A (x - mu)||^2 + ||I - sqrt(1-ab) A||_F^2 ) / d,
    A = sqrt(1-ab) M^{-1},  M = ab Sigma + (1-ab) I

for a single-Gaussian class (derivation: eps_hat is affine in eps, so the
residual is (I - B) eps - a with B = (1-ab) M^{-1} and
a = sqrt(ab (1-ab)) M^{-1} (x - mu), and the expectation splits into the
squared bias plus the Frobenius term).  At x = mu with Sigma = I this
reduces to ab^2.  For mixture classes there is no closed form and a seeded
Monte Carlo fallback is used.

brute_force_elbo is the slow estimator of the per-timestep error curve:
independent eps draws at every single t, no sharing, no strategy.  It
exists to validate the cheap estimators, not to be fast.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .classify import LossKind, class_point_errors
from .denoisers.gaussian import GaussianClass, GaussianClassModel, normalize_prior
from .errors import ConfigurationError
from .rng import derive_seed, generator
from .schedule import NoiseSchedule
from .strategy import FixedSingle, make_sample_set


def bayes_log_likelihoods(xs: np.ndarray, model: GaussianClassModel) -> np.ndarray:
    """log p(x | c) for each row and class, (N, C).  Requires nonsingular
    class covariances."""
    xs = np.asarray(xs, dtype=np.float64)
    flat = xs.reshape(xs.shape[0], -1)
    ab = np.ones(flat.shape[0])
    cols = [cls.log_density_noised_batch(flat, ab) for cls in model.classes]
    return np.stack(cols, axis=1)


def bayes_posterior_gmm(x: np.ndarray, model: GaussianClassModel,
                        prior=None) -> np.ndarray:
    """Exact class posterior p(c | x) under the generating model."""
    prior = normalize_prior(prior, model.n_classes)
    logp = bayes_log_likelihoods(np.asarray(x)[None], model)[0] + np.log(prior)
    return np.exp(logp - logsumexp(logp))


def bayes_predict_batch(xs: np.ndarray, model: GaussianClassModel,
                        prior=None) -> np.ndarray:
    """argmax_c p(c | x) per row; ties resolve toward the lower index."""
    prior = normalize_prior(prior, model.n_classes)
    logp = bayes_log_likelihoods(xs, model) + np.log(prior)[None, :]
    return np.argmax(logp, axis=1)


def bayes_accuracy(model: GaussianClassModel, prior=None, n_test: int = 100000,
                   seed: int = 0) -> float:
    """Bayes-rule accuracy on a fresh sample of n_test labeled points drawn
    from the model under the prior.  The irreducible ceiling every
    classifier is compared against."""
    prior = normalize_prior(prior, model.n_classes)
    rng = generator(seed)
    counts = rng.multinomial(n_test, prior)
    correct = 0
    for k, cls in enumerate(model.classes):
        if counts[k] == 0:
            continue
        xs = cls.sample(rng, int(counts[k]))
        pred = bayes_predict_batch(xs, model, prior)
        correct += int(np.sum(pred == k))
    return correct / n_test


def analytic_expected_error(x: np.ndarray, c: int, t: int,
                            schedule: NoiseSchedule,
                            model: GaussianClassModel,
                            mc_draws: int = 20000,
                            mc_seed: int = 0) -> float:
    """Expected squared-L2 denoising error of class c at timestep t for a
    clean input x (closed form above).  Mixture classes fall back to a
    Monte Carlo quadrature with ``mc_draws`` seeded draws."""
    cls = model.classes[int(c)]
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = cls.d
    if x.shape[0] != d:
        raise ConfigurationError(f"x has {x.shape[0]} elements, model has {d}")
    ab = schedule.alpha_bar(int(t))
    om = 1.0 - ab
    if cls.m == 1:
        dev = x - cls.means[0]
        if cls.is_diagonal:
            denom = ab * cls.diag_vars[0] + om
            bias = np.sqrt(ab * om) * dev / denom
            fro = np.sum((ab * cls.diag_vars[0] / denom) ** 2)
        else:
            M = ab * cls.full_covs[0] + om * np.eye(d)
            minv = np.linalg.inv(M)
            bias = np.sqrt(ab * om) * (minv @ dev)
            fro = np.sum((np.eye(d) - om * minv) ** 2)
        return float((np.sum(bias * bias) + fro) / d)
    # mixture: seeded Monte Carlo over eps
    rng = generator(mc_seed)
    eps = rng.standard_normal((mc_draws, d))
    x_ts = np.sqrt(ab) * x[None, :] + np.sqrt(om) * eps
    eps_hat = cls.eps_posterior_batch(x_ts, np.full(mc_draws, ab))
    r = eps - eps_hat
    return float(np.mean(r * r))


@dataclass(frozen=True)
class ElboCurve:
    """Per-timestep mean denoising error with standard errors."""

    class_id: int
    ts: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "class", "error", "stderr"])
            for i in range(len(self.ts)):
                w.writerow([int(self.ts[i]), self.class_id,
                            repr(float(self.errors[i])),
                            repr(float(self.stderrs[i]))])


def brute_force_elbo(x: np.ndarray, c, denoiser, schedule: NoiseSchedule,
                     n_per_t: int = 32, seed: int = 0, ts=None,
                     loss: LossKind = LossKind.SQUARED_L2) -> ElboCurve:
    """Estimate the error at every timestep independently: ``n_per_t``
    fresh eps draws per t, averaged per t.  ``ts`` defaults to all of
    [1, T]."""
    if n_per_t < 2:
        raise ConfigurationError(f"n_per_t must be >= 2, got {n_per_t}")
    x = np.asarray(x, dtype=np.float64)
    if ts is None:
        ts = np.arange(1, schedule.T + 1)
    ts = np.asarray(ts, dtype=np.int64)
    errors = np.empty(len(ts))
    stderrs = np.empty(len(ts))
    for i, t in enumerate(ts):
        sample_set = make_sample_set(FixedSingle(int(t)), n_per_t, schedule.T,
                                     derive_seed(seed, int(t)), x.shape)
        pts = class_point_errors(x, c, denoiser, schedule, sample_set, loss=loss)
        errors[i] = np.mean(pts)
        stderrs[i] = np.std(pts, ddof=1) / np.sqrt(n_per_t)
    return ElboCurve(class_id=c, ts=ts, errors=errors, stderrs=stderrs)
