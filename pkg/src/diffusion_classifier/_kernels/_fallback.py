"""Pure-numpy kernel implementations.

Same signatures and semantics as the compiled module; used when the
extension is unavailable or explicitly disabled.  Arguments arrive as
C-contiguous float64 arrays (the package __init__ coerces them).
"""

from __future__ import annotations

import numpy as np

LOSS_SQUARED_L2 = 0
LOSS_L1 = 1
LOSS_HUBER = 2


def forward_noise_batch(x: np.ndarray, eps: np.ndarray,
                        alpha_bar: np.ndarray) -> np.ndarray:
    """x_t rows: sqrt(ab_i) x + sqrt(1 - ab_i) eps_i for each row i."""
    s_ab = np.sqrt(alpha_bar)[:, None]
    s_om = np.sqrt(1.0 - alpha_bar)[:, None]
    return s_ab * x[None, :] + s_om * eps


def _elementwise_loss(r: np.ndarray, kind: int) -> np.ndarray:
    if kind == LOSS_SQUARED_L2:
        return r * r
    if kind == LOSS_L1:
        return np.abs(r)
    if kind == LOSS_HUBER:
        a = np.abs(r)
        return np.where(a < 1.0, r * r, a)
    raise ValueError(f"unknown loss code {kind}")


def loss_points(eps: np.ndarray, eps_hat: np.ndarray, kind: int) -> np.ndarray:
    """Per-row mean elementwise loss of the residual eps - eps_hat."""
    return np.mean(_elementwise_loss(eps - eps_hat, kind), axis=1)


def diag_gauss_loss_points(x: np.ndarray, mu: np.ndarray, var: np.ndarray,
                           alpha_bar: np.ndarray, eps: np.ndarray,
                           kind: int) -> np.ndarray:
    """Fused noising + exact diagonal-Gaussian denoising + loss reduction.

    Row i: x_t = sqrt(ab_i) x + sqrt(1 - ab_i) eps_i, then
    eps_hat_j = sqrt(1 - ab_i) (x_t_j - sqrt(ab_i) mu_j) / (ab_i var_j + 1 - ab_i)
    and the result is the per-row mean elementwise loss of eps_i - eps_hat.
    """
    ab = alpha_bar[:, None]
    s_ab = np.sqrt(ab)
    om = 1.0 - ab
    s_om = np.sqrt(om)
    xt = s_ab * x[None, :] + s_om * eps
    eps_hat = s_om * (xt - s_ab * mu[None, :]) / (ab * var[None, :] + om)
    return np.mean(_elementwise_loss(eps - eps_hat, kind), axis=1)
