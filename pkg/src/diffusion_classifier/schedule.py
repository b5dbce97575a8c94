"""Forward-process noise schedules.

A schedule fixes beta_1..beta_T and the derived quantities

    alpha_t     = 1 - beta_t
    alpha_bar_t = prod_{s<=t} alpha_s

so that x_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps.  Timesteps
are 1-indexed throughout the package: t runs over [1, T].

Two families are provided.  The linear family ramps beta from 1e-4 to 0.02
at T = 1000; for other T the endpoints are scaled by 1000/T so the total
amount of noise injected is preserved and alpha_bar_T stays near 0 (without
the rescale, T = 100 leaves alpha_bar_T around exp(-1), which is not a
complete noising).  The cosine family sets alpha_bar_t = f(t)/f(0) with
f(u) = cos^2((u/T + s)/(1 + s) * pi/2), s = 0.008, then derives betas and
clips them below 0.999.  In both families alpha_bar is recomputed as the
running product of (1 - beta), so the product identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable schedule: betas indexed 0..T-1 internally, accessed 1..T."""

    kind: str
    T: int
    betas: np.ndarray
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.shape != (self.T,):
            raise ConfigurationError(
                f"schedule needs {self.T} betas, got shape {betas.shape}")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ConfigurationError("betas must lie strictly in (0, 1)")
        betas = betas.copy()
        betas.setflags(write=False)
        alpha_bars = np.cumprod(1.0 - betas)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    def _check_t(self, t) -> np.ndarray:
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer):
            raise ConfigurationError(f"timestep must be integer, got {t.dtype}")
        if np.any(t < 1) or np.any(t > self.T):
            raise ConfigurationError(
                f"timestep out of range [1, {self.T}]: {t[(t < 1) | (t > self.T)]}")
        return t

    def beta(self, t):
        """beta_t for scalar or array t in [1, T]."""
        t = self._check_t(t)
        out = self.betas[t - 1]
        return float(out) if np.isscalar(t) or t.ndim == 0 else out

    def alpha(self, t):
        """alpha_t = 1 - beta_t."""
        t = self._check_t(t)
        out = 1.0 - self.betas[t - 1]
        return float(out) if np.isscalar(t) or t.ndim == 0 else out

    def alpha_bar(self, t):
        """alpha_bar_t = prod_{s<=t} (1 - beta_s)."""
        t = self._check_t(t)
        out = self.alpha_bars[t - 1]
        return float(out) if np.isscalar(t) or t.ndim == 0 else out

    def alpha_bar_prev(self, t):
        """alpha_bar_{t-1}, with the convention alpha_bar_0 = 1."""
        t = self._check_t(t)
        padded = np.concatenate(([1.0], self.alpha_bars))
        out = padded[t - 1]
        return float(out) if np.isscalar(t) or t.ndim == 0 else out

    def posterior_variance(self, t):
        """beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.

        The variance of q(x_{t-1} | x_t, x_0).  Zero at t = 1.
        """
        t = self._check_t(t)
        out = (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bars[t - 1]) \
            * self.betas[t - 1]
        return float(out) if np.isscalar(t) or t.ndim == 0 else out


def linear_schedule(T: int = 1000, beta_start: float = 1e-4,
                    beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta ramp.  beta_start/beta_end are quoted at T = 1000 and
    scaled by 1000/T for other T; see the module docstring."""
    if T < 2:
        raise ConfigurationError(f"linear schedule needs T >= 2, got {T}")
    scale = 1000.0 / T
    betas = np.linspace(beta_start * scale, beta_end * scale, T)
    betas = np.minimum(betas, _BETA_MAX)
    return NoiseSchedule(kind="linear", T=T, betas=betas)


def cosine_schedule(T: int = 1000, s: float = 0.008) -> NoiseSchedule:
    """Cosine alpha_bar curve with offset ``s``, betas clipped below 0.999."""
    if T < 2:
        raise ConfigurationError(f"cosine schedule needs T >= 2, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos((t / T + s) / (1.0 + s) * np.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    betas = np.clip(betas, 1e-12, _BETA_MAX)
    return NoiseSchedule(kind="cosine", T=T, betas=betas)


def make_schedule(kind: str, T: int = 1000, **kwargs) -> NoiseSchedule:
    if kind == "linear":
        return linear_schedule(T, **kwargs)
    if kind == "cosine":
        return cosine_schedule(T, **kwargs)
    raise ConfigurationError(f"unknown schedule kind {kind!r}")
