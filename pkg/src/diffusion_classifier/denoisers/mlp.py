"""A small fully connected eps-prediction network, trained with Adam.

Implemented directly on numpy so that training is deterministic given a
seed, gradients are hand-derived (and checked against finite differences),
and checkpoints round-trip bit-exactly.  At desk scale the network is a
few dense layers; there is no convolutional structure.

Input layout: the flattened sample is concatenated with a conditioning
embedding, which is the sum of a fixed sinusoidal timestep embedding and a
learned class-embedding row.  Row n_classes of the embedding table is the
null class used for unconditional prediction and for classifier-free
dropout during training.

The optional variance head maps the last hidden activation to a per-element
log variance (clipped to [-10, 10] before exponentiation).  It is trained
with the Gaussian negative log likelihood of the detached eps residual, so
variance training never steers the mean prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericError
from ..rng import generator
from ..schedule import NoiseSchedule
from .base import Denoiser

_ACTIVATIONS = ("tanh", "identity")


def time_embedding(ts: np.ndarray, dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal timestep embedding: [sin(t w_k), cos(t w_k)] with
    geometrically spaced frequencies w_k = 10000^(-k / (dim/2))."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = np.asarray(ts, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


class MlpDenoiser(Denoiser):

    supports_unconditional = True

    def __init__(self, data_shape, n_classes: int, hidden=(64, 64),
                 embed_dim: int = 16, activation: str = "tanh",
                 variance_head: bool = False, seed: int = 0,
                 dtype=np.float32):
        data_shape = tuple(int(s) for s in np.atleast_1d(data_shape))
        if n_classes < 1:
            raise ConfigurationError(f"n_classes must be >= 1, got {n_classes}")
        hidden = tuple(int(h) for h in hidden)
        if len(hidden) == 0 or any(h < 1 for h in hidden):
            raise ConfigurationError(
                "hidden layer list must be nonempty with positive sizes")
        if embed_dim < 2 or embed_dim % 2 != 0:
            raise ConfigurationError(
                f"embed_dim must be a positive even number, got {embed_dim}")
        if activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.data_shape = data_shape
        self.d = int(np.prod(data_shape))
        self.n_classes = int(n_classes)
        self.hidden = hidden
        self.embed_dim = int(embed_dim)
        self.activation = activation
        self.variance_head = bool(variance_head)
        self.provides_variance = self.variance_head
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self._init_params(seed)

    # parameters -----------------------------------------------------------

    @property
    def null_class(self) -> int:
        return self.n_classes

    def _layer_sizes(self):
        return [self.d + self.embed_dim, *self.hidden, self.d]

    def _init_params(self, seed: int):
        rng = generator(seed)
        p = {}
        p["embed"] = (rng.standard_normal((self.n_classes + 1, self.embed_dim))
                      / np.sqrt(self.embed_dim))
        sizes = self._layer_sizes()
        for l in range(len(sizes) - 1):
            fan_in = sizes[l]
            p[f"W{l + 1}"] = rng.standard_normal(
                (sizes[l + 1], fan_in)) / np.sqrt(fan_in)
            p[f"b{l + 1}"] = np.zeros(sizes[l + 1])
        if self.variance_head:
            p["Wv"] = 0.01 * rng.standard_normal(
                (self.d, sizes[-2])) / np.sqrt(sizes[-2])
            p["bv"] = np.zeros(self.d)
        self.params = {k: v.astype(self.dtype) for k, v in p.items()}

    def state(self) -> dict:
        """Name -> parameter array, in a stable order."""
        return {k: self.params[k] for k in sorted(self.params)}

    def load_state(self, state: dict):
        for name, arr in self.params.items():
            if name not in state:
                raise ConfigurationError(f"missing parameter {name!r}")
            new = np.asarray(state[name])
            if new.shape != arr.shape:
                raise ConfigurationError(
                    f"parameter {name!r} has shape {new.shape}, "
                    f"expected {arr.shape}")
            self.params[name] = new.astype(self.dtype)
        extra = set(state) - set(self.params)
        if extra:
            raise ConfigurationError(f"unexpected parameters {sorted(extra)}")

    def meta(self) -> dict:
        return {"data_shape": list(self.data_shape),
                "n_classes": self.n_classes,
                "hidden": list(self.hidden),
                "embed_dim": self.embed_dim,
                "activation": self.activation,
                "variance_head": self.variance_head}

    @classmethod
    def from_meta(cls, meta: dict, seed: int = 0) -> "MlpDenoiser":
        return cls(data_shape=tuple(meta["data_shape"]),
                   n_classes=meta["n_classes"],
                   hidden=tuple(meta["hidden"]),
                   embed_dim=meta["embed_dim"],
                   activation=meta["activation"],
                   variance_head=meta["variance_head"],
                   seed=seed)

    def astype(self, dtype) -> "MlpDenoiser":
        """Copy with parameters cast to ``dtype`` (used by the gradient
        check, which runs in float64)."""
        other = MlpDenoiser(self.data_shape, self.n_classes, self.hidden,
                            self.embed_dim, self.activation,
                            self.variance_head, seed=0, dtype=dtype)
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return other

    # forward / backward ----------------------------------------------------

    def _class_indices(self, c, n: int) -> np.ndarray:
        if c is None:
            return np.full(n, self.null_class, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        cidx = np.broadcast_to(np.atleast_1d(c), (n,)).copy()
        if np.any(cidx < 0) or np.any(cidx > self.null_class):
            raise ValueError(f"class index out of range [0, {self.null_class}]")
        return cidx

    def _forward(self, x_flat: np.ndarray, ts: np.ndarray, cidx: np.ndarray):
        p = self.params
        emb = time_embedding(ts, self.embed_dim, self.dtype) + p["embed"][cidx]
        a = np.concatenate([x_flat.astype(self.dtype), emb], axis=1)
        acts = [a]
        for l in range(len(self.hidden)):
            z = a @ p[f"W{l + 1}"].T + p[f"b{l + 1}"]
            a = np.tanh(z) if self.activation == "tanh" else z
            acts.append(a)
        n_layers = len(self.hidden) + 1
        out = a @ p[f"W{n_layers}"].T + p[f"b{n_layers}"]
        logv = a @ p["Wv"].T + p["bv"] if self.variance_head else None
        return out, logv, acts

    def loss_and_grads(self, x_t_flat: np.ndarray, ts: np.ndarray,
                       cidx: np.ndarray, eps_flat: np.ndarray,
                       nll_residual: np.ndarray = None):
        """Training loss and parameter gradients for one batch.

        Loss = mean((eps_hat - eps)^2) over batch and elements, plus (with a
        variance head) the mean Gaussian NLL 0.5 (log s2 + r^2 / s2) of the
        detached residual.  ``nll_residual`` substitutes an explicit frozen
        residual into the NLL term; the gradient check uses this to realize
        the detachment as an actual constant, since finite differences
        cannot express a stop-gradient.
        """
        p = self.params
        bsz, d = eps_flat.shape
        out, logv, acts = self._forward(x_t_flat, ts, cidx)
        r = out - eps_flat.astype(self.dtype)
        scale = 1.0 / (bsz * d)
        loss = float(np.sum(r.astype(np.float64) ** 2)) * scale
        grads = {}
        delta = (2.0 * scale) * r
        n_layers = len(self.hidden) + 1
        grads[f"W{n_layers}"] = delta.T @ acts[-1]
        grads[f"b{n_layers}"] = delta.sum(axis=0)
        back = delta @ p[f"W{n_layers}"]
        if self.variance_head:
            clipped = np.clip(logv, -10.0, 10.0)
            s2 = np.exp(clipped)
            rd = r if nll_residual is None else nll_residual.astype(self.dtype)
            r2 = rd * rd  # detached: no gradient into the mean path
            loss += float(np.sum(0.5 * (clipped.astype(np.float64)
                                        + r2.astype(np.float64) / s2))) * scale
            dlogv = (0.5 * scale) * (1.0 - r2 / s2) \
                * ((logv > -10.0) & (logv < 10.0))
            grads["Wv"] = dlogv.T @ acts[-1]
            grads["bv"] = dlogv.sum(axis=0)
            back = back + dlogv @ p["Wv"]
        for l in range(len(self.hidden), 0, -1):
            if self.activation == "tanh":
                dz = back * (1.0 - acts[l] * acts[l])
            else:
                dz = back
            grads[f"W{l}"] = dz.T @ acts[l - 1]
            grads[f"b{l}"] = dz.sum(axis=0)
            back = dz @ p[f"W{l}"]
        demb = back[:, self.d:]
        gemb = np.zeros_like(p["embed"])
        np.add.at(gemb, cidx, demb)
        grads["embed"] = gemb
        return loss, grads

    # inference --------------------------------------------------------------

    def predict_batch(self, x_ts, ts, c):
        x_ts = np.asarray(x_ts)
        n = x_ts.shape[0]
        shape = x_ts.shape[1:]
        cidx = self._class_indices(c, n)
        out, _, _ = self._forward(x_ts.reshape(n, -1),
                                  np.asarray(ts), cidx)
        return out.astype(np.float64).reshape(n, *shape)

    def predict(self, x_t, t, c):
        return self.predict_batch(np.asarray(x_t)[None], np.asarray([int(t)]), c)[0]

    def predict_variance_batch(self, x_ts, ts, c):
        if not self.variance_head:
            raise ConfigurationError("network has no variance head")
        x_ts = np.asarray(x_ts)
        n = x_ts.shape[0]
        shape = x_ts.shape[1:]
        cidx = self._class_indices(c, n)
        _, logv, _ = self._forward(x_ts.reshape(n, -1), np.asarray(ts), cidx)
        s2 = np.exp(np.clip(logv.astype(np.float64), -10.0, 10.0))
        return s2.reshape(n, *shape)

    def predict_variance(self, x_t, t, c):
        return self.predict_variance_batch(np.asarray(x_t)[None],
                                           np.asarray([int(t)]), c)[0]


@dataclass
class TrainTrace:
    """Loss values recorded during training."""

    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("step,loss\n")
            for s, l in zip(self.steps, self.losses):
                f.write(f"{s},{l!r}\n")


def train_denoiser(net: MlpDenoiser, dataset, schedule: NoiseSchedule, *,
                   steps: int, batch_size: int, lr: float, seed: int,
                   p_uncond: float = 0.1, log_every: int = 50,
                   betas=(0.9, 0.999), adam_eps: float = 1e-8) -> TrainTrace:
    """Train ``net`` in place on (x, label) pairs with the eps-prediction
    objective; each batch draws t uniform on [1, T] and eps standard normal,
    and drops the class label to the null class with probability p_uncond.

    ``dataset`` is an (xs, labels) pair or any object with xs / labels
    attributes.  Deterministic given ``seed``.  A non-finite loss aborts
    with the failing step index.
    """
    if hasattr(dataset, "xs"):
        xs, labels = dataset.xs, dataset.labels
    else:
        xs, labels = dataset
    xs = np.asarray(xs, dtype=net.dtype).reshape(len(xs), -1)
    labels = np.asarray(labels, dtype=np.int64)
    if xs.shape[1] != net.d:
        raise ConfigurationError(
            f"dataset has {xs.shape[1]} elements per sample, net expects {net.d}")
    if np.any(labels < 0) or np.any(labels >= net.n_classes):
        raise ConfigurationError("labels out of range for the network")
    if not 0.0 <= p_uncond <= 1.0:
        raise ConfigurationError(f"p_uncond must be in [0, 1], got {p_uncond}")
    rng = generator(seed)
    alpha_bars = schedule.alpha_bars
    b1, b2 = betas
    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v = {k: np.zeros_like(val) for k, val in net.params.items()}
    trace = TrainTrace()
    for step in range(steps):
        idx = rng.integers(0, len(xs), size=batch_size)
        ts = rng.integers(1, schedule.T + 1, size=batch_size)
        eps = rng.standard_normal((batch_size, net.d), dtype=np.float32)
        drop = rng.random(batch_size) < p_uncond
        cidx = np.where(drop, net.null_class, labels[idx])
        ab = alpha_bars[ts - 1].astype(net.dtype)
        x_t = np.sqrt(ab)[:, None] * xs[idx] + np.sqrt(1.0 - ab)[:, None] * eps
        loss, grads = net.loss_and_grads(x_t, ts, cidx, eps)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at step {step}")
        k = step + 1
        for name, g in grads.items():
            m[name] = b1 * m[name] + (1.0 - b1) * g
            v[name] = b2 * v[name] + (1.0 - b2) * g * g
            m_hat = m[name] / (1.0 - b1 ** k)
            v_hat = v[name] / (1.0 - b2 ** k)
            net.params[name] = net.params[name] \
                - lr * m_hat / (np.sqrt(v_hat) + adam_eps)
        if step % log_every == 0 or step == steps - 1:
            trace.steps.append(step)
            trace.losses.append(loss)
    return trace


@dataclass(frozen=True)
class GradcheckReport:
    """Per-parameter deviation between analytic and central finite
    difference gradients, computed on a float64 copy of the network.

    Deviation is max |analytic - numeric| over the parameter array,
    normalized by the largest gradient magnitude in that array (absolute
    floor 1e-12), which avoids blowing up entries whose true gradient is 0.
    """

    per_param: dict
    max_rel_dev: float
    worst_param: str


def random_batch(net: MlpDenoiser, batch_size: int, T: int, seed: int):
    """A synthetic (x_t, ts, cidx, eps) batch for the gradient check."""
    rng = generator(seed)
    x_t = rng.standard_normal((batch_size, net.d))
    ts = rng.integers(1, T + 1, size=batch_size)
    cidx = rng.integers(0, net.n_classes + 1, size=batch_size)
    eps = rng.standard_normal((batch_size, net.d))
    return x_t, ts, cidx, eps


def finite_diff_gradcheck(net: MlpDenoiser, batch, h: float = 1e-5) -> GradcheckReport:
    """Check loss_and_grads against central finite differences.

    ``batch`` is (x_t, ts, cidx, eps).  The check promotes the network to
    float64; it validates the gradient math, not float32 rounding.
    """
    x_t, ts, cidx, eps = batch
    net64 = net.astype(np.float64)
    _, grads = net64.loss_and_grads(x_t, ts, cidx, eps)
    # freeze the NLL residual at its baseline value so the finite-difference
    # loss agrees with the analytic detachment
    frozen = None
    if net64.variance_head:
        out, _, _ = net64._forward(np.asarray(x_t, dtype=np.float64),
                                   np.asarray(ts), np.asarray(cidx))
        frozen = out - np.asarray(eps, dtype=np.float64)

    def loss_at(params):
        saved = net64.params
        net64.params = params
        try:
            return net64.loss_and_grads(x_t, ts, cidx, eps,
                                        nll_residual=frozen)[0]
        finally:
            net64.params = saved

    per_param = {}
    for name, g in grads.items():
        base = net64.params[name]
        num = np.empty_like(g)
        flat_num = num.reshape(-1)
        flat_base = base.reshape(-1)
        for j in range(flat_base.size):
            orig = flat_base[j]
            params = dict(net64.params)
            pert = base.copy().reshape(-1)
            pert[j] = orig + h
            params[name] = pert.reshape(base.shape)
            up = loss_at(params)
            pert[j] = orig - h
            params[name] = pert.reshape(base.shape)
            down = loss_at(params)
            flat_num[j] = (up - down) / (2.0 * h)
        denom = max(float(np.max(np.abs(g))), float(np.max(np.abs(num))), 1e-12)
        per_param[name] = float(np.max(np.abs(g - num))) / denom
    worst = max(per_param, key=per_param.get)
    return GradcheckReport(per_param=per_param,
                           max_rel_dev=per_param[worst],
                           worst_param=worst)
