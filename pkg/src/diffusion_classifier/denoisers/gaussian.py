"""Exact eps-posterior denoiser for Gaussian-mixture class conditionals.

With forward noising x_t = sqrt(ab) x + sqrt(1-ab) eps and a class
conditional p(x | c) = sum_i w_i N(mu_i, Sigma_i), the noised marginal is

    p(x_t | c) = sum_i w_i N(sqrt(ab) mu_i, M_i),   M_i = ab Sigma_i + (1-ab) I.

For a single component the posterior mean of eps is linear in x_t:

    E[eps | x_t] = sqrt(1-ab) M^{-1} (x_t - sqrt(ab) mu)

and the posterior covariance is Cov(eps | x_t) = I - (1-ab) M^{-1}.  For a
mixture, components are combined by their responsibilities under the noised
densities, and the per-element variance follows from the law of total
variance.  These are the Bayes-optimal predictions, so this backend is the
ground truth against which Monte Carlo estimates and trained networks are
checked.

Covariances may be any PSD matrix (zero covariance models a class of
identical points); only M_i is ever inverted, and M_i is positive definite
whenever ab < 1, which holds for every t in [1, T].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from ..errors import ConfigurationError, NumericError
from ..schedule import NoiseSchedule
from .base import Denoiser

_LOG_2PI = float(np.log(2.0 * np.pi))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianClass:
    """One class conditional: a mixture of Gaussians over flat data.

    Exactly one of diag_vars (m, d) / full_covs (m, d, d) is set.  Weights
    are positive and sum to 1.
    """

    means: np.ndarray
    diag_vars: np.ndarray | None
    full_covs: np.ndarray | None
    weights: np.ndarray

    def __post_init__(self):
        means = _readonly(np.atleast_2d(self.means))
        m, d = means.shape
        weights = _readonly(np.atleast_1d(self.weights))
        if weights.shape != (m,):
            raise ConfigurationError(
                f"weights shape {weights.shape} does not match {m} components")
        if np.any(weights <= 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ConfigurationError("weights must be positive and sum to 1")
        if (self.diag_vars is None) == (self.full_covs is None):
            raise ConfigurationError(
                "exactly one of diag_vars / full_covs must be given")
        if self.diag_vars is not None:
            dv = _readonly(np.atleast_2d(self.diag_vars))
            if dv.shape != (m, d):
                raise ConfigurationError(
                    f"diag_vars shape {dv.shape}, expected {(m, d)}")
            if np.any(dv < 0):
                raise ConfigurationError("variances must be >= 0")
            object.__setattr__(self, "diag_vars", dv)
        else:
            fc = _readonly(self.full_covs)
            if fc.ndim == 2:
                fc = _readonly(fc[None])
            if fc.shape != (m, d, d):
                raise ConfigurationError(
                    f"full_covs shape {fc.shape}, expected {(m, d, d)}")
            for i in range(m):
                c = fc[i]
                if not np.allclose(c, c.T, rtol=1e-10, atol=1e-12):
                    raise ConfigurationError(f"covariance {i} is not symmetric")
                w = np.linalg.eigvalsh(c)
                if w.min() < -1e-9 * max(1.0, float(w.max())):
                    raise ConfigurationError(f"covariance {i} is not PSD")
            object.__setattr__(self, "full_covs", fc)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)

    # construction helpers ------------------------------------------------

    @staticmethod
    def single(mean, cov) -> "GaussianClass":
        """One Gaussian.  cov may be a scalar (isotropic), a (d,) vector of
        variances, or a (d, d) matrix."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        d = mean.shape[0]
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            return GaussianClass(mean[None], np.full((1, d), float(cov)),
                                 None, np.ones(1))
        if cov.ndim == 1:
            return GaussianClass(mean[None], cov[None], None, np.ones(1))
        return GaussianClass(mean[None], None, cov[None], np.ones(1))

    @staticmethod
    def mixture(means, covs, weights) -> "GaussianClass":
        """Mixture from per-component covariances (scalar, vector or matrix
        each); components are promoted to full matrices unless all are
        diagonal.  Weights are normalized."""
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        m, d = means.shape
        weights = np.asarray(weights, dtype=np.float64)
        weights = weights / weights.sum()
        norm = []
        for c in covs:
            c = np.asarray(c, dtype=np.float64)
            if c.ndim == 0:
                c = np.full(d, float(c))
            norm.append(c)
        if all(c.ndim == 1 for c in norm):
            return GaussianClass(means, np.stack(norm), None, weights)
        full = [np.diag(c) if c.ndim == 1 else c for c in norm]
        return GaussianClass(means, None, np.stack(full), weights)

    # basic properties ----------------------------------------------------

    @property
    def m(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def is_diagonal(self) -> bool:
        return self.diag_vars is not None

    # sampling ------------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws from the mixture, (n, d).  Deterministic given rng."""
        comp = rng.choice(self.m, size=n, p=self.weights) if self.m > 1 \
            else np.zeros(n, dtype=np.int64)
        z = rng.standard_normal((n, self.d))
        out = np.empty((n, self.d))
        for i in range(self.m):
            sel = comp == i
            if not sel.any():
                continue
            if self.is_diagonal:
                out[sel] = self.means[i] + z[sel] * np.sqrt(self.diag_vars[i])
            else:
                lam, vec = np.linalg.eigh(self.full_covs[i])
                fac = vec * np.sqrt(np.maximum(lam, 0.0))
                out[sel] = self.means[i] + z[sel] @ fac.T
        return out

    # eps posterior under noising ------------------------------------------

    def _component_stats(self, x_ts: np.ndarray, ab: np.ndarray):
        """Per-component eps-posterior means, per-element variances, and
        log densities of the noised component at each row.

        x_ts: (N, d), ab: (N,).  Returns (eps (m,N,d), var (m,N,d),
        logp (m,N)).
        """
        n, d = x_ts.shape
        om = 1.0 - ab
        s_ab = np.sqrt(ab)
        s_om = np.sqrt(om)
        eps = np.empty((self.m, n, d))
        var = np.empty((self.m, n, d))
        logp = np.empty((self.m, n))
        if self.is_diagonal:
            for i in range(self.m):
                dev = x_ts - s_ab[:, None] * self.means[i]
                denom = ab[:, None] * self.diag_vars[i] + om[:, None]
                eps[i] = s_om[:, None] * dev / denom
                var[i] = ab[:, None] * self.diag_vars[i] / denom
                logp[i] = -0.5 * (np.sum(dev * dev / denom, axis=1)
                                  + np.sum(np.log(denom), axis=1)
                                  + d * _LOG_2PI)
        else:
            # the noised covariance depends on ab, so factor once per
            # distinct ab value and solve for the rows sharing it
            uniq, inv = np.unique(ab, return_inverse=True)
            eye = np.eye(d)
            for i in range(self.m):
                for g, a in enumerate(uniq):
                    rows = np.nonzero(inv == g)[0]
                    M = a * self.full_covs[i] + (1.0 - a) * eye
                    try:
                        cho = cho_factor(M, lower=True)
                    except LinAlgError as exc:
                        raise NumericError(
                            f"singular noised covariance (component {i}, "
                            f"alpha_bar={a!r})") from exc
                    dev = x_ts[rows] - np.sqrt(a) * self.means[i]
                    sol = cho_solve(cho, dev.T).T
                    eps[i, rows] = np.sqrt(1.0 - a) * sol
                    minv = cho_solve(cho, eye)
                    var[i, rows] = np.diag(eye - (1.0 - a) * minv)
                    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
                    logp[i, rows] = -0.5 * (np.einsum("ij,ij->i", dev, sol)
                                            + logdet + d * _LOG_2PI)
        return eps, var, logp

    def eps_posterior_batch(self, x_ts: np.ndarray, ab: np.ndarray,
                            with_variance: bool = False):
        """E[eps | x_t] rows, and optionally per-element Var[eps | x_t].

        x_ts: (N, d), ab: (N,) alpha_bar values in (0, 1).
        """
        x_ts = np.asarray(x_ts, dtype=np.float64)
        ab = np.asarray(ab, dtype=np.float64)
        if self.m == 1:
            eps, var, _ = self._component_stats(x_ts, ab)
            return (eps[0], var[0]) if with_variance else eps[0]
        eps, var, logp = self._component_stats(x_ts, ab)
        logw = np.log(self.weights)[:, None]
        lse = logsumexp(logp + logw, axis=0)
        resp = np.exp(logp + logw - lse[None, :])          # (m, N)
        mean = np.einsum("mn,mnd->nd", resp, eps)
        if not with_variance:
            return mean
        second = np.einsum("mn,mnd->nd", resp, var + eps * eps)
        return mean, np.maximum(second - mean * mean, 0.0)

    def log_density_noised_batch(self, x_ts: np.ndarray, ab) -> np.ndarray:
        """log p(x_t) for each row under the noised mixture.  ab may be a
        scalar or (N,); ab = 1 gives the clean-data density (requires
        nonsingular covariances)."""
        x_ts = np.asarray(x_ts, dtype=np.float64)
        ab = np.broadcast_to(np.asarray(ab, dtype=np.float64), (x_ts.shape[0],))
        if np.any(ab >= 1.0):
            return self._log_density_clean(x_ts, ab)
        _, _, logp = self._component_stats(x_ts, ab)
        return logsumexp(logp + np.log(self.weights)[:, None], axis=0)

    def _log_density_clean(self, xs: np.ndarray, ab: np.ndarray) -> np.ndarray:
        if not np.all(ab == 1.0):
            raise ConfigurationError("alpha_bar must be in (0, 1) or exactly 1")
        n, d = xs.shape
        logp = np.empty((self.m, n))
        for i in range(self.m):
            dev = xs - self.means[i]
            if self.is_diagonal:
                v = self.diag_vars[i]
                if np.any(v <= 0):
                    raise NumericError(
                        f"component {i} has singular covariance; clean-data "
                        "density undefined")
                logp[i] = -0.5 * (np.sum(dev * dev / v, axis=1)
                                  + float(np.sum(np.log(v))) + d * _LOG_2PI)
            else:
                try:
                    cho = cho_factor(self.full_covs[i], lower=True)
                except LinAlgError as exc:
                    raise NumericError(
                        f"component {i} has singular covariance; clean-data "
                        "density undefined") from exc
                sol = cho_solve(cho, dev.T).T
                logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
                logp[i] = -0.5 * (np.einsum("ij,ij->i", dev, sol)
                                  + logdet + d * _LOG_2PI)
        return logsumexp(logp + np.log(self.weights)[:, None], axis=0)


@dataclass(frozen=True)
class GaussianClassModel:
    """An ordered collection of Gaussian class conditionals over the same
    flat data dimension."""

    classes: tuple

    def __post_init__(self):
        classes = tuple(self.classes)
        if not classes:
            raise ConfigurationError("model needs at least one class")
        d = classes[0].d
        for k, cls in enumerate(classes):
            if not isinstance(cls, GaussianClass):
                raise ConfigurationError(f"class {k} is not a GaussianClass")
            if cls.d != d:
                raise ConfigurationError(
                    f"class {k} has dimension {cls.d}, expected {d}")
        object.__setattr__(self, "classes", classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def d(self) -> int:
        return self.classes[0].d

    def marginal(self, prior=None) -> GaussianClass:
        """The unconditional mixture: all components of all classes,
        weighted by the class prior (uniform when None)."""
        prior = normalize_prior(prior, self.n_classes)
        means = np.concatenate([c.means for c in self.classes])
        weights = np.concatenate([p * c.weights
                                  for p, c in zip(prior, self.classes)])
        if all(c.is_diagonal for c in self.classes):
            return GaussianClass(means,
                                 np.concatenate([c.diag_vars for c in self.classes]),
                                 None, weights)
        covs = np.concatenate([
            c.full_covs if not c.is_diagonal
            else np.stack([np.diag(v) for v in c.diag_vars])
            for c in self.classes])
        return GaussianClass(means, None, covs, weights)


def normalize_prior(prior, n_classes: int) -> np.ndarray:
    """Validate a class prior (uniform when None): positive, sums to 1."""
    if prior is None:
        return np.full(n_classes, 1.0 / n_classes)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (n_classes,):
        raise ConfigurationError(
            f"prior shape {prior.shape}, expected ({n_classes},)")
    if np.any(prior <= 0) or abs(float(prior.sum()) - 1.0) > 1e-9:
        raise ConfigurationError("prior must be positive and sum to 1")
    return prior


class AnalyticDenoiser(Denoiser):
    """Bayes-optimal denoiser for a GaussianClassModel.

    Conditional predictions use the class's eps posterior; unconditional
    ones use the prior-weighted marginal mixture.
    """

    supports_unconditional = True
    provides_variance = True

    def __init__(self, model: GaussianClassModel, schedule: NoiseSchedule,
                 prior=None):
        self.model = model
        self.schedule = schedule
        self.prior = normalize_prior(prior, model.n_classes)
        self._marginal = model.marginal(self.prior)

    def _class_for(self, c) -> GaussianClass:
        if c is None:
            return self._marginal
        c = int(c)
        if not 0 <= c < self.model.n_classes:
            raise ValueError(f"class id {c} out of range "
                             f"[0, {self.model.n_classes})")
        return self.model.classes[c]

    def _run(self, x_ts, ts, c, with_variance):
        x_ts = np.asarray(x_ts, dtype=np.float64)
        n = x_ts.shape[0]
        shape = x_ts.shape[1:]
        flat = x_ts.reshape(n, -1)
        if flat.shape[1] != self.model.d:
            raise ValueError(f"data has {flat.shape[1]} elements, "
                             f"model expects {self.model.d}")
        ab = self.schedule.alpha_bar(np.asarray(ts))
        ab = np.broadcast_to(np.atleast_1d(ab), (n,))
        cls = self._class_for(c)
        try:
            out = cls.eps_posterior_batch(flat, ab, with_variance=with_variance)
        except NumericError as exc:
            raise NumericError(f"class {c!r}: {exc}") from exc
        if with_variance:
            return out[0].reshape(n, *shape), out[1].reshape(n, *shape)
        return out.reshape(n, *shape)

    def predict(self, x_t, t, c):
        return self._run(np.asarray(x_t)[None], [int(t)], c, False)[0]

    def predict_batch(self, x_ts, ts, c):
        return self._run(x_ts, ts, c, False)

    def predict_variance(self, x_t, t, c):
        return self._run(np.asarray(x_t)[None], [int(t)], c, True)[1][0]

    def predict_variance_batch(self, x_ts, ts, c):
        return self._run(x_ts, ts, c, True)[1]

    def diag_fast_path(self, c):
        cls = self._class_for(c)
        if cls.m == 1 and cls.is_diagonal:
            return cls.means[0], cls.diag_vars[0]
        return None


def gmm_predict_eps(model: GaussianClassModel, x_t: np.ndarray, t: int, c,
                    schedule: NoiseSchedule, prior=None) -> np.ndarray:
    """E[eps | x_t, c] under the model; c = None marginalizes over classes
    with the given prior (uniform by default)."""
    cls = model.marginal(prior) if c is None else model.classes[int(c)]
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = np.asarray([schedule.alpha_bar(int(t))])
    out = cls.eps_posterior_batch(x_t.reshape(1, -1), ab)
    return out[0].reshape(x_t.shape)
