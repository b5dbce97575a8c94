"""Denoiser interface.

A denoiser predicts the noise eps that was mixed into a sample:
eps_hat = f(x_t, t, c) with conditioning class c (None = unconditional).
Implementations may also predict the per-element variance of eps given
x_t, used by the variational-bound objective.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np


class Denoiser(ABC):
    """Base class.  ``predict`` output shape always equals input shape."""

    #: whether predict(.., c=None) is meaningful
    supports_unconditional: bool = False
    #: whether predict_variance is available
    provides_variance: bool = False

    @abstractmethod
    def predict(self, x_t: np.ndarray, t: int, c) -> np.ndarray:
        """eps_hat for a single noised sample at timestep t, class c."""

    def predict_batch(self, x_ts: np.ndarray, ts: np.ndarray, c) -> np.ndarray:
        """Row-wise predict.  x_ts: (N, *shape), ts: (N,).  Subclasses
        override with vectorized versions; the default just loops."""
        return np.stack([self.predict(x_ts[i], int(ts[i]), c)
                         for i in range(x_ts.shape[0])])

    def predict_variance(self, x_t: np.ndarray, t: int, c) -> np.ndarray:
        """Per-element variance of eps given x_t.  Only when
        provides_variance is True."""
        raise NotImplementedError(f"{type(self).__name__} has no variance head")

    def predict_variance_batch(self, x_ts: np.ndarray, ts: np.ndarray, c) -> np.ndarray:
        return np.stack([self.predict_variance(x_ts[i], int(ts[i]), c)
                         for i in range(x_ts.shape[0])])

    def diag_fast_path(self, c):
        """(mu, var) arrays enabling the fused scoring kernel, or None.

        Only exact denoisers whose eps-posterior for class ``c`` is the
        single diagonal-Gaussian formula may return parameters here; the
        classifier then skips the generic predict path.
        """
        return None
