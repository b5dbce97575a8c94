"""Classification by conditional denoising error.

An input x is scored against each candidate class c by the Monte Carlo
average of the denoising error over a shared sample set S = {(t_i, eps_i)}:

    err(c) = mean_i loss(eps_i - eps_hat(x_{t_i}, t_i, c))

with x_{t_i} = sqrt(ab_{t_i}) x + sqrt(1 - ab_{t_i}) eps_i.  The predicted
class is the argmin, and softmax(-err) is the posterior under a uniform
prior.  Because every class sees the same (t_i, eps_i) pairs, class
comparisons are paired differences: the common noise realization cancels
out of err(c) - err(c'), which is what makes a few dozen trials usable.

The adaptive classifier spends this budget in stages, eliminating
implausible classes early and extending the shared sample stream only for
the survivors, with running means accumulated across stages.

Objectives:
  uniform-l2: the per-point loss above with weight 1 (the loss kind may be
      squared L2, L1, or the literal piecewise Huber r^2 / |r| split at 1).
  vlb: beta_t^2 / (2 alpha_t (1 - ab_t)) * mean(r^2 / s2_hat) per point,
      where s2_hat is the denoiser's predicted per-element variance; the
      residual term is always quadratic regardless of the loss kind.
  sum: the per-point sum of the two, exactly.

Classifier-free guidance replaces eps_hat by
(1 + w) eps_cond - w eps_uncond; w = 0 takes the unguided code path, so
enabling guidance at weight zero is bit-identical to disabling it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as kernels
from .errors import ConfigurationError
from .noise import STANDARD, NoiseVariant
from .rng import generator
from .schedule import NoiseSchedule
from .strategy import (SampleSet, StagePlan, UniformRandom, draw_uniform_points,
                       make_sample_set, validate_plan)


class LossKind(str, Enum):
    SQUARED_L2 = "squared-l2"
    L1 = "l1"
    HUBER = "huber"


_LOSS_CODE = {LossKind.SQUARED_L2: kernels.LOSS_SQUARED_L2,
              LossKind.L1: kernels.LOSS_L1,
              LossKind.HUBER: kernels.LOSS_HUBER}


class Objective(str, Enum):
    UNIFORM_L2 = "uniform-l2"
    VLB = "vlb"
    SUM = "sum"


@dataclass(frozen=True)
class GuidanceConfig:
    enabled: bool = False
    w: float = 0.0

    def __post_init__(self):
        if self.w < 0.0:
            raise ConfigurationError(
                f"guidance weight must be >= 0, got {self.w}")

    @property
    def effective(self) -> bool:
        return self.enabled and self.w != 0.0


NO_GUIDANCE = GuidanceConfig()


def _elementwise_loss(r: np.ndarray, kind: LossKind) -> np.ndarray:
    if kind == LossKind.SQUARED_L2:
        return r * r
    if kind == LossKind.L1:
        return np.abs(r)
    a = np.abs(r)
    return np.where(a < 1.0, r * r, a)


def _crop_slices(shape, crop: int):
    if crop < 0:
        raise ValueError(f"crop must be >= 0, got {crop}")
    if crop == 0:
        return None
    if len(shape) < 2:
        raise ValueError(f"crop needs spatial (>= 2-D) data, got shape {shape}")
    if 2 * crop >= shape[0] or 2 * crop >= shape[1]:
        raise ValueError(
            f"crop {crop} leaves nothing of spatial dims {shape[:2]}")
    return (slice(crop, shape[0] - crop), slice(crop, shape[1] - crop))


def eps_error(eps: np.ndarray, eps_hat: np.ndarray,
              loss: LossKind = LossKind.SQUARED_L2, crop: int = 0) -> float:
    """Mean elementwise loss of the residual eps - eps_hat, optionally
    restricted to the center window [crop:-crop, crop:-crop] of the first
    two (spatial) dimensions.  crop = 0 evaluates the full residual."""
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps.shape != eps_hat.shape:
        raise ValueError(
            f"eps shape {eps.shape} != eps_hat shape {eps_hat.shape}")
    r = eps - eps_hat
    sl = _crop_slices(eps.shape, crop)
    if sl is not None:
        r = r[sl]
    return float(np.mean(_elementwise_loss(r, loss)))


def apply_guidance(eps_cond: np.ndarray, eps_uncond: np.ndarray,
                   w: float) -> np.ndarray:
    """(1 + w) eps_cond - w eps_uncond."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"shape mismatch {eps_cond.shape} vs {eps_uncond.shape}")
    if w < 0.0:
        raise ConfigurationError(f"guidance weight must be >= 0, got {w}")
    return (1.0 + w) * eps_cond - w * eps_uncond


def vlb_weight(t: int, schedule: NoiseSchedule) -> float:
    """beta_t^2 / (2 beta_tilde_t alpha_t (1 - alpha_bar_t)), the
    variational weight on the mean squared residual when the reverse
    variance is fixed to beta_tilde.  beta_tilde_1 = 0, so the weight is
    +inf at t = 1."""
    t = int(t)
    beta = schedule.beta(t)
    bt = schedule.posterior_variance(t)
    if bt == 0.0:
        return float("inf")
    return beta ** 2 / (2.0 * bt * schedule.alpha(t) * (1.0 - schedule.alpha_bar(t)))


def posterior_from_errors(mean_errors) -> np.ndarray:
    """softmax(-errors): the class posterior under a uniform prior.
    Shift-invariant, so it is computed after subtracting the minimum."""
    e = np.asarray(mean_errors, dtype=np.float64)
    z = np.exp(e.min() - e)
    return z / z.sum()


@dataclass
class TraceRecorder:
    """Per-trial diagnostic rows: (input, class, trial, t, error)."""

    rows: list = field(default_factory=list)

    def record_points(self, input_id, class_id, start_trial, ts, errors):
        for k in range(len(ts)):
            self.rows.append((input_id, class_id, start_trial + k,
                              int(ts[k]), float(errors[k])))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["input", "class", "trial", "t", "error"])
            for row in self.rows:
                w.writerow([row[0], row[1], row[2], row[3], repr(row[4])])


@dataclass(frozen=True)
class ClassificationResult:
    """Outcome of scoring one input against a candidate class list.

    Arrays are aligned with ``classes``.  ``posterior`` is softmax(-mean
    errors) over the classes that completed the final stage; classes
    eliminated earlier get probability 0, and eliminated_at_stage records
    the 1-based stage of each early elimination (None for classes that
    reached the final stage; losing the final cut is not an elimination).
    """

    classes: tuple
    mean_errors: np.ndarray
    trial_counts: np.ndarray
    posterior: np.ndarray
    predicted: int
    eliminated_at_stage: tuple

    @property
    def predicted_index(self) -> int:
        return self.classes.index(self.predicted)


def _check_common(x, classes, denoiser, objective, guidance):
    if len(classes) == 0:
        raise ConfigurationError("candidate class list is empty")
    if guidance.effective and not denoiser.supports_unconditional:
        raise ConfigurationError(
            "guidance requires a denoiser with unconditional support")
    if objective in (Objective.VLB, Objective.SUM) and not denoiser.provides_variance:
        raise ConfigurationError(
            f"objective {objective.value} requires a denoiser that predicts "
            "variance")


def class_point_errors(x: np.ndarray, c, denoiser, schedule: NoiseSchedule,
                       sample_set: SampleSet,
                       loss: LossKind = LossKind.SQUARED_L2,
                       objective: Objective = Objective.UNIFORM_L2,
                       guidance: GuidanceConfig = NO_GUIDANCE,
                       crop: int = 0) -> np.ndarray:
    """Per-point errors of one class over the sample set, (N,).

    This is the innermost scoring routine; every classification mode (naive
    or adaptive, guided or not, any objective) funnels through it, which is
    what keeps equal configurations bit-identical.
    """
    x = np.asarray(x, dtype=np.float64)
    if sample_set.shape != x.shape:
        raise ValueError(
            f"sample set drawn for shape {sample_set.shape}, x has {x.shape}")
    _check_common(x, [c], denoiser, objective, guidance)
    sl = _crop_slices(x.shape, crop)
    ts = sample_set.ts
    n = sample_set.n
    eps = sample_set.eps
    x_flat = x.reshape(-1)
    eps_flat = eps.reshape(n, -1)
    ab = schedule.alpha_bar(ts)
    code = _LOSS_CODE[loss]

    # the fused kernel applies when the eps posterior is the closed
    # diagonal-Gaussian form and nothing (crop, guidance) modifies the
    # residual; the predicate must not depend on the objective so that the
    # sum objective reuses bit-identical uniform-l2 points
    fast = None
    if crop == 0 and not guidance.effective:
        fast = denoiser.diag_fast_path(c)

    x_ts = None
    eps_hat = None

    def _predict():
        nonlocal x_ts, eps_hat
        if eps_hat is None:
            x_ts = kernels.forward_noise_batch(x_flat, eps_flat, ab) \
                .reshape(n, *x.shape)
            eps_hat = denoiser.predict_batch(x_ts, ts, c)
            if guidance.effective:
                eps_hat = apply_guidance(
                    eps_hat, denoiser.predict_batch(x_ts, ts, None), guidance.w)
        return x_ts, eps_hat

    l2_points = None
    if objective in (Objective.UNIFORM_L2, Objective.SUM):
        if fast is not None:
            mu, var = fast
            l2_points = kernels.diag_gauss_loss_points(
                x_flat, mu, var, ab, eps_flat, code)
        else:
            _, ehat = _predict()
            if sl is None:
                l2_points = kernels.loss_points(
                    eps_flat, ehat.reshape(n, -1), code)
            else:
                r = (eps - ehat)[(slice(None),) + sl]
                l2_points = np.mean(
                    _elementwise_loss(r.reshape(n, -1), loss), axis=1)
        if objective == Objective.UNIFORM_L2:
            return l2_points

    xt, ehat = _predict()
    var_hat = denoiser.predict_variance_batch(xt, ts, c)
    r = eps - ehat
    if sl is not None:
        r = r[(slice(None),) + sl]
        var_hat = var_hat[(slice(None),) + sl]
    coef = schedule.beta(ts) ** 2 / (2.0 * schedule.alpha(ts)
                                     * (1.0 - schedule.alpha_bar(ts)))
    rs = (r * r).reshape(n, -1)
    vlb_points = coef * np.mean(rs / var_hat.reshape(n, -1), axis=1)
    if objective == Objective.VLB:
        return vlb_points
    return l2_points + vlb_points


def estimate_errors(x: np.ndarray, classes, denoiser,
                    schedule: NoiseSchedule, sample_set: SampleSet,
                    loss: LossKind = LossKind.SQUARED_L2,
                    objective: Objective = Objective.UNIFORM_L2,
                    guidance: GuidanceConfig = NO_GUIDANCE,
                    crop: int = 0, trace: TraceRecorder = None,
                    input_id=0) -> np.ndarray:
    """Mean error of each candidate class over one shared sample set."""
    _check_common(x, classes, denoiser, objective, guidance)
    out = np.empty(len(classes))
    for k, c in enumerate(classes):
        pts = class_point_errors(x, c, denoiser, schedule, sample_set,
                                 loss=loss, objective=objective,
                                 guidance=guidance, crop=crop)
        if trace is not None:
            trace.record_points(input_id, c, 0, sample_set.ts, pts)
        out[k] = np.mean(pts)
    return out


def _survivor_posterior(classes, means, eliminated):
    full = np.zeros(len(classes))
    alive = [i for i in range(len(classes)) if eliminated[i] is None]
    sub = posterior_from_errors(means[alive])
    full[alive] = sub
    return full


def classify_naive(x: np.ndarray, classes, denoiser, schedule: NoiseSchedule,
                   strategy=UniformRandom(), n_trials: int = 64,
                   loss: LossKind = LossKind.SQUARED_L2,
                   objective: Objective = Objective.UNIFORM_L2,
                   guidance: GuidanceConfig = NO_GUIDANCE,
                   seed: int = 0, crop: int = 0,
                   noise_variant: NoiseVariant = STANDARD,
                   trace: TraceRecorder = None,
                   input_id=0) -> ClassificationResult:
    """Score every candidate class on the full shared sample set."""
    x = np.asarray(x, dtype=np.float64)
    _check_common(x, classes, denoiser, objective, guidance)
    sample_set = make_sample_set(strategy, n_trials, schedule.T, seed,
                                 x.shape, noise_variant)
    errors = estimate_errors(x, classes, denoiser, schedule, sample_set,
                             loss=loss, objective=objective, guidance=guidance,
                             crop=crop, trace=trace, input_id=input_id)
    predicted = int(np.argmin(errors))
    return ClassificationResult(
        classes=tuple(classes),
        mean_errors=errors,
        trial_counts=np.full(len(classes), n_trials, dtype=np.int64),
        posterior=posterior_from_errors(errors),
        predicted=classes[predicted],
        eliminated_at_stage=(None,) * len(classes))


def classify_adaptive(x: np.ndarray, classes, denoiser,
                      schedule: NoiseSchedule, plan: StagePlan,
                      loss: LossKind = LossKind.SQUARED_L2,
                      objective: Objective = Objective.UNIFORM_L2,
                      guidance: GuidanceConfig = NO_GUIDANCE,
                      seed: int = 0, crop: int = 0,
                      noise_variant: NoiseVariant = STANDARD,
                      trace: TraceRecorder = None,
                      input_id=0) -> ClassificationResult:
    """Staged classification: each stage extends the shared uniform-random
    sample stream for the surviving classes only, then keeps the plan's
    quota of lowest running means.  Ties keep the lower class index.

    A one-stage plan keeping everything until the end reproduces
    classify_naive with UniformRandom draw for draw.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_common(x, classes, denoiser, objective, guidance)
    diag = validate_plan(plan, len(classes))
    if not diag.ok:
        raise ConfigurationError("invalid stage plan: " + "; ".join(diag.problems))
    rng = generator(seed)
    n_cls = len(classes)
    sums = np.zeros(n_cls)
    counts = np.zeros(n_cls, dtype=np.int64)
    eliminated = [None] * n_cls
    alive = list(range(n_cls))
    prev = 0
    for stage, (k, cum_trials) in enumerate(zip(plan.keep, plan.trials), start=1):
        n_new = cum_trials - prev
        ts, eps = draw_uniform_points(rng, n_new, schedule.T, x.shape,
                                      noise_variant)
        stage_set = SampleSet(ts, eps, seed=None, variant=noise_variant)
        for i in alive:
            pts = class_point_errors(x, classes[i], denoiser, schedule,
                                     stage_set, loss=loss, objective=objective,
                                     guidance=guidance, crop=crop)
            if trace is not None:
                trace.record_points(input_id, classes[i], prev, ts, pts)
            sums[i] += pts.sum()
            counts[i] += n_new
        prev = cum_trials
        means = sums[alive] / counts[alive]
        order = sorted(range(len(alive)), key=lambda j: (means[j], alive[j]))
        if stage < plan.n_stages:
            if k < len(alive):
                for j in order[k:]:
                    eliminated[alive[j]] = stage
                alive = sorted(alive[j] for j in order[:k])
        else:
            winner = alive[order[0]]
    # every class was evaluated in stage 1, so counts are all positive
    mean_errors = sums / counts
    return ClassificationResult(
        classes=tuple(classes),
        mean_errors=mean_errors,
        trial_counts=counts,
        posterior=_survivor_posterior(classes, mean_errors, eliminated),
        predicted=classes[winner],
        eliminated_at_stage=tuple(eliminated))
