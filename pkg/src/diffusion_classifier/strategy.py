"""Timestep selection strategies, shared sample sets, and budget plans.

A sample set is the ordered list of (t, eps) pairs shared across every
candidate class when scoring one input; sharing the pairs turns the
per-class error comparison into a paired difference, which is what makes
small Monte Carlo budgets workable.  Sample sets are reconstructible
bit-exactly from (strategy, n_trials, T, seed, shape, variant).

Draw order is part of the contract: strategies with random timesteps
interleave one t draw and one eps draw per point from a single generator,
and fixed-timestep strategies draw only the eps stream.  The adaptive
classifier extends a uniform-random stream stage by stage, so a one-stage
keep-everything plan reproduces the naive classifier draw for draw.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .noise import STANDARD, NoiseVariant, draw_noise
from .rng import generator


@dataclass(frozen=True)
class UniformRandom:
    """t uniform on [1, T] per point."""


@dataclass(frozen=True)
class EvenlySpaced:
    """Cycle through n_distinct bin-center timesteps round-robin, so extra
    trials become extra eps draws spread evenly over the bins."""

    n_distinct: int


@dataclass(frozen=True)
class FixedSingle:
    """Every point at one timestep."""

    t: int


@dataclass(frozen=True)
class Window:
    """t uniform on [center - halfwidth, center + halfwidth]."""

    center: int
    halfwidth: int


@dataclass(frozen=True)
class ExplicitList:
    """Cycle through a user-provided timestep list round-robin."""

    ts: tuple

    def __post_init__(self):
        object.__setattr__(self, "ts", tuple(int(t) for t in self.ts))


def evenly_spaced_ts(n_distinct: int, T: int) -> list:
    """Bin centers round((j - 1/2) T / n) for j = 1..n, rounding half up."""
    if n_distinct < 1:
        raise ConfigurationError(f"n_distinct must be >= 1, got {n_distinct}")
    ts = [int(np.floor((j - 0.5) * T / n_distinct + 0.5))
          for j in range(1, n_distinct + 1)]
    ts = [min(max(t, 1), T) for t in ts]
    if len(set(ts)) != len(ts):
        raise ConfigurationError(
            f"{n_distinct} evenly spaced timesteps do not fit in [1, {T}]")
    return ts


@dataclass(frozen=True)
class SampleSet:
    """The shared evaluation points: ts (N,) int64 and eps (N, *shape).

    ``seed`` records the generating seed when the set came from
    make_sample_set (None for internally built stage sets).
    """

    ts: np.ndarray
    eps: np.ndarray
    seed: object = None
    variant: NoiseVariant = STANDARD

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=np.int64)
        eps = np.asarray(self.eps, dtype=np.float64)
        if ts.ndim != 1 or eps.shape[0] != ts.shape[0]:
            raise ConfigurationError(
                f"ts shape {ts.shape} does not pair with eps shape {eps.shape}")
        if ts.shape[0] == 0:
            raise ConfigurationError("sample set must be nonempty")
        ts.setflags(write=False)
        eps.setflags(write=False)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "eps", eps)

    @property
    def n(self) -> int:
        return int(self.ts.shape[0])

    @property
    def shape(self) -> tuple:
        return self.eps.shape[1:]

    @property
    def points(self):
        """Iterate (t, eps) pairs in order."""
        return zip(self.ts.tolist(), self.eps)

    def digest(self) -> str:
        """Content hash; two classifications sharing points share this."""
        h = hashlib.sha256()
        h.update(repr(self.eps.shape).encode())
        h.update(self.ts.tobytes())
        h.update(self.eps.tobytes())
        return h.hexdigest()


def draw_uniform_points(rng: np.random.Generator, n: int, T: int, shape,
                        variant: NoiseVariant = STANDARD):
    """n interleaved (t, eps) draws from one stream; the contract shared by
    UniformRandom sample sets and adaptive stage extensions."""
    ts = np.empty(n, dtype=np.int64)
    eps = np.empty((n, *tuple(shape)), dtype=np.float64)
    for i in range(n):
        ts[i] = int(rng.integers(1, T + 1))
        eps[i] = draw_noise(tuple(shape), variant, rng)
    return ts, eps


def make_sample_set(strategy, n_trials: int, T: int, seed: int, shape,
                    variant: NoiseVariant = STANDARD) -> SampleSet:
    """Draw the shared (t, eps) points for one classification."""
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be >= 1, got {n_trials}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    rng = generator(seed)
    if isinstance(strategy, UniformRandom):
        ts, eps = draw_uniform_points(rng, n_trials, T, shape, variant)
        return SampleSet(ts, eps, seed=seed, variant=variant)
    if isinstance(strategy, Window):
        lo = strategy.center - strategy.halfwidth
        hi = strategy.center + strategy.halfwidth
        if strategy.halfwidth < 0:
            raise ConfigurationError("halfwidth must be >= 0")
        if lo < 1 or hi > T:
            raise ConfigurationError(
                f"window [{lo}, {hi}] falls outside [1, {T}]")
        ts = np.empty(n_trials, dtype=np.int64)
        eps = np.empty((n_trials, *shape), dtype=np.float64)
        for i in range(n_trials):
            ts[i] = int(rng.integers(lo, hi + 1))
            eps[i] = draw_noise(shape, variant, rng)
        return SampleSet(ts, eps, seed=seed, variant=variant)
    if isinstance(strategy, FixedSingle):
        base = [strategy.t]
    elif isinstance(strategy, EvenlySpaced):
        base = evenly_spaced_ts(strategy.n_distinct, T)
    elif isinstance(strategy, ExplicitList):
        if len(strategy.ts) == 0:
            raise ConfigurationError("explicit timestep list must be nonempty")
        base = list(strategy.ts)
    else:
        raise ConfigurationError(f"unknown strategy {strategy!r}")
    if any(t < 1 or t > T for t in base):
        raise ConfigurationError(
            f"strategy references timesteps outside [1, {T}]: {base}")
    ts = np.array([base[i % len(base)] for i in range(n_trials)], dtype=np.int64)
    eps = np.empty((n_trials, *shape), dtype=np.float64)
    for i in range(n_trials):
        eps[i] = draw_noise(shape, variant, rng)
    return SampleSet(ts, eps, seed=seed, variant=variant)


@dataclass(frozen=True)
class StagePlan:
    """Adaptive budget plan: after stage i (cumulative trials[i] points per
    surviving class) only the keep[i] best classes continue."""

    keep: tuple
    trials: tuple

    def __post_init__(self):
        object.__setattr__(self, "keep", tuple(int(k) for k in self.keep))
        object.__setattr__(self, "trials", tuple(int(t) for t in self.trials))

    @property
    def n_stages(self) -> int:
        return len(self.keep)


@dataclass(frozen=True)
class PlanDiagnostics:
    ok: bool
    problems: tuple
    total_evaluations: object  # int when the plan is valid, else None


def validate_plan(plan: StagePlan, n_classes: int) -> PlanDiagnostics:
    """Structural checks plus the total per-input evaluation count
    sum_i survivors_i * (trials[i] - trials[i-1]); never raises."""
    problems = []
    keep, trials = plan.keep, plan.trials
    if len(keep) == 0:
        problems.append("plan has no stages")
    if len(keep) != len(trials):
        problems.append(
            f"keep has {len(keep)} stages but trials has {len(trials)}")
    if any(k < 1 for k in keep):
        problems.append("keep counts must be >= 1")
    if any(keep[i] <= keep[i + 1] for i in range(len(keep) - 1)):
        problems.append("keep counts must be strictly decreasing")
    if keep and keep[-1] != 1:
        problems.append("final keep count must be 1")
    if any(t < 1 for t in trials):
        problems.append("trial counts must be >= 1")
    if any(trials[i] >= trials[i + 1] for i in range(len(trials) - 1)):
        problems.append("trial counts must be strictly increasing")
    if n_classes < 1:
        problems.append("need at least 1 candidate class")
    if keep and n_classes >= 1 and keep[0] > n_classes:
        problems.append(
            f"keep[0] = {keep[0]} exceeds the {n_classes} candidate classes")
    if problems:
        return PlanDiagnostics(False, tuple(problems), None)
    total = 0
    survivors = n_classes
    prev = 0
    for k, t in zip(keep, trials):
        total += survivors * (t - prev)
        survivors = min(k, survivors)
        prev = t
    return PlanDiagnostics(True, (), total)


def prune_candidates(scores, k: int) -> np.ndarray:
    """Indices of the k highest scores, ordered by descending score; ties
    resolve toward the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ConfigurationError(f"scores must be 1-D, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ConfigurationError("scores must be finite")
    if not 1 <= k <= scores.shape[0]:
        raise ConfigurationError(
            f"k must be in [1, {scores.shape[0]}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return order[:k]
