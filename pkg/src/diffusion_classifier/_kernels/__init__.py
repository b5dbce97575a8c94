"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (_core, built from _core.pyx) is preferred.  Set the
environment variable DIFFCLS_PURE_PYTHON=1 before import to force the
numpy fallback; if the extension failed to build, the fallback is selected
automatically.  ``backend_name()`` reports which one is active.

Both backends compute the same quantities; results agree to floating-point
accumulation order (tested at tight tolerance, not bit-exactness).  All
bit-exact reproducibility contracts in the package hold within a backend.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("DIFFCLS_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as _impl
    _BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        _BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl
        _BACKEND = "fallback"

LOSS_SQUARED_L2 = 0
LOSS_L1 = 1
LOSS_HUBER = 2


def backend_name() -> str:
    return _BACKEND


def _c64(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


def forward_noise_batch(x, eps, alpha_bar) -> np.ndarray:
    """Noised rows x_t[i] = sqrt(ab[i]) x + sqrt(1 - ab[i]) eps[i].

    x: (d,), eps: (N, d), alpha_bar: (N,) -> (N, d).
    """
    return _impl.forward_noise_batch(_c64(x), _c64(eps), _c64(alpha_bar))


def loss_points(eps, eps_hat, kind: int) -> np.ndarray:
    """Per-row mean elementwise loss of eps - eps_hat.  (N, d) -> (N,)."""
    return _impl.loss_points(_c64(eps), _c64(eps_hat), int(kind))


def diag_gauss_loss_points(x, mu, var, alpha_bar, eps, kind: int) -> np.ndarray:
    """Fused noise + exact diagonal-Gaussian eps-prediction + loss.

    x, mu, var: (d,), alpha_bar: (N,), eps: (N, d) -> (N,).
    """
    return _impl.diag_gauss_loss_points(
        _c64(x), _c64(mu), _c64(var), _c64(alpha_bar), _c64(eps), int(kind))
