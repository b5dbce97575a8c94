"""Forward noising and the noise-draw variants used for importance sampling.

The default draw is standard normal.  The alternatives reproduce the
negative-result ablations: an all-zeros draw, element-wise truncated
normals, and a standard normal rescaled so its norm equals the expected
norm E||eps|| = sqrt(2) Gamma((d+1)/2) / Gamma(d/2) of a d-dimensional
standard normal.  None of the alternatives come with a corrected ELBO
weighting; they are deliberate approximations to be measured, not used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError, NumericError
from .schedule import NoiseSchedule

STANDARD_NORMAL = "standard-normal"
ZERO = "zero"
TRUNCATED_NORMAL = "truncated-normal"
EXPECTED_NORM = "expected-norm"

_KINDS = (STANDARD_NORMAL, ZERO, TRUNCATED_NORMAL, EXPECTED_NORM)


@dataclass(frozen=True)
class NoiseVariant:
    """How eps is drawn.  ``low``/``high`` only apply to truncated-normal."""

    kind: str = STANDARD_NORMAL
    low: float = float("-inf")
    high: float = float("inf")

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown noise variant {self.kind!r}")
        if self.kind == TRUNCATED_NORMAL:
            if not (self.low < self.high):
                raise ConfigurationError(
                    f"truncated-normal needs low < high, got [{self.low}, {self.high}]")
            if self.low > 0.0 or self.high < 0.0:
                raise ConfigurationError(
                    "truncation interval must contain 0 so rejection terminates fast")


STANDARD = NoiseVariant(STANDARD_NORMAL)


def expected_chi_norm(d: int) -> float:
    """E||z|| for z ~ N(0, I_d): sqrt(2) Gamma((d+1)/2) / Gamma(d/2)."""
    if d < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {d}")
    return float(np.sqrt(2.0) * np.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0)))


def draw_noise(shape, variant: NoiseVariant, rng: np.random.Generator) -> np.ndarray:
    """Draw one eps array of ``shape`` under ``variant`` from ``rng``.

    Truncated draws resample offending elements until all land in
    [low, high].  The expected-norm draw rescales a standard draw to have
    norm exactly expected_chi_norm(d); a zero-norm draw (impossible in
    practice for d >= 1) would be a numeric failure.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    if variant.kind == ZERO:
        return np.zeros(shape, dtype=np.float64)
    eps = rng.standard_normal(shape)
    if variant.kind == STANDARD_NORMAL:
        return eps
    if variant.kind == TRUNCATED_NORMAL:
        bad = (eps < variant.low) | (eps > variant.high)
        while bad.any():
            eps[bad] = rng.standard_normal(int(bad.sum()))
            bad = (eps < variant.low) | (eps > variant.high)
        return eps
    # expected-norm: rescale so ||eps|| matches the chi mean for this d
    norm = float(np.linalg.norm(eps))
    if norm == 0.0:
        raise NumericError("cannot rescale a zero-norm draw")
    return eps * (expected_chi_norm(eps.size) / norm)


def forward_noise(x: np.ndarray, t: int, eps: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ValueError(f"x shape {x.shape} != eps shape {eps.shape}")
    ab = schedule.alpha_bar(int(t))
    return np.sqrt(ab) * x + np.sqrt(1.0 - ab) * eps
