"""Time-conditioned MLP velocity field with hand-derived gradients and Adam.

The network maps ``concat(x, embed_time(t))`` through dense layers with
``tanh`` on every hidden layer and an identity output layer, so the output
lives in sample space.  Weights are stored ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kvtext
from .errors import DataError, DimensionError, DomainError, NumericError
from .tensor_core import DTYPE, as_tensor

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class TimeEmbedding:
    dim: int = 32
    max_period: float = 10000.0

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise DomainError(f"embedding dim must be a positive even integer, got {self.dim}")
        if not self.max_period > 0:
            raise DomainError("max_period must be positive")

    @property
    def frequencies(self) -> np.ndarray:
        half = self.dim // 2
        return self.max_period ** (-2.0 * np.arange(half) / self.dim)


def embed_times(ts, cfg: TimeEmbedding = TimeEmbedding()) -> np.ndarray:
    """Embed a batch of times; returns ``(len(ts), cfg.dim)``, sin block then cos block."""
    ts = np.atleast_1d(np.asarray(ts, dtype=DTYPE))
    if not np.all((ts >= 0.0) & (ts <= 1.0)):
        raise DomainError(f"time outside [0, 1]: {ts[(ts < 0) | (ts > 1) | np.isnan(ts)]}")
    args = ts[:, None] * cfg.frequencies[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def embed_time(t: float, cfg: TimeEmbedding = TimeEmbedding()) -> np.ndarray:
    return embed_times([t], cfg)[0]


@dataclass
class VelocityNet:
    widths: list
    weights: list
    biases: list
    embedding: TimeEmbedding = field(default_factory=TimeEmbedding)
    activation: str = "tanh"

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2:
            raise DimensionError("need at least input and output widths")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.widths[0] != self.widths[-1] + self.embedding.dim:
            raise DimensionError(
                f"input width {self.widths[0]} != sample dim {self.widths[-1]} "
                f"+ embedding dim {self.embedding.dim}"
            )
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("one weight matrix and one bias per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.widths[l], self.widths[l + 1])
            if w.shape != want or b.shape != (want[1],):
                raise DimensionError(f"layer {l}: got W{w.shape} b{b.shape}, want W{want}")

    @classmethod
    def init(cls, sample_dim: int, hidden=(256, 256), embedding=None, seed: int = 0,
             activation: str = "tanh") -> "VelocityNet":
        """Glorot-uniform weights, zero biases, drawn from ``seed``."""
        embedding = embedding or TimeEmbedding()
        widths = [sample_dim + embedding.dim, *hidden, sample_dim]
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(widths, weights, biases, embedding, activation)

    @classmethod
    def zeros(cls, sample_dim: int, hidden=(), embedding=None) -> "VelocityNet":
        embedding = embedding or TimeEmbedding()
        widths = [sample_dim + embedding.dim, *hidden, sample_dim]
        weights = [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])]
        biases = [np.zeros(b) for b in widths[1:]]
        return cls(widths, weights, biases, embedding)

    @property
    def sample_dim(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list:
        """Parameters in declaration order ``W0, b0, W1, b1, ...`` (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "VelocityNet":
        return VelocityNet(list(self.widths), [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases], self.embedding, self.activation)

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else z

    def _forward_cache(self, xs, ts):
        xs = as_tensor(xs)
        if xs.ndim != 2 or xs.shape[1] != self.sample_dim:
            raise DimensionError(f"expected (batch, {self.sample_dim}) samples, got {xs.shape}")
        if not np.all(np.isfinite(xs)):
            raise NumericError("non-finite value in velocity-net input")
        ts = np.atleast_1d(np.asarray(ts, dtype=DTYPE))
        if ts.shape[0] == 1 and xs.shape[0] > 1:
            ts = np.full(xs.shape[0], ts[0])
        if ts.shape != (xs.shape[0],):
            raise DimensionError(f"{ts.shape[0]} times for {xs.shape[0]} samples")
        h = np.concatenate([xs, embed_times(ts, self.embedding)], axis=1)
        acts = [h]
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if l == last else self._act(z)
            acts.append(h)
        return acts

    def forward_batch(self, xs, ts) -> np.ndarray:
        return self._forward_cache(xs, ts)[-1]

    def __call__(self, x, t) -> np.ndarray:
        return forward(self, x, t)


def forward(net: VelocityNet, x, t: float) -> np.ndarray:
    """Velocity at a single flattened sample ``x`` and time ``t``."""
    x = as_tensor(x)
    return net.forward_batch(x.reshape(1, -1), [t])[0].reshape(x.shape)


def backward(net: VelocityNet, xs, ts, targets):
    """Mean squared-norm regression loss and its exact parameter gradients.

    ``loss = mean_b ||v(x_b, t_b) - target_b||^2``.  Returns ``(loss, grads)``
    with ``grads`` aligned to ``net.params()``.
    """
    xs = as_tensor(xs)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise DomainError("backward needs a non-empty (batch, dim) array")
    targets = as_tensor(targets)
    if targets.shape != xs.shape:
        raise DimensionError(f"targets {targets.shape} vs inputs {xs.shape}")
    acts = net._forward_cache(xs, ts)
    batch = xs.shape[0]
    resid = acts[-1] - targets
    loss = float(np.sum(resid * resid) / batch)

    grads = [None] * (2 * net.n_layers)
    delta = (2.0 / batch) * resid
    for l in range(net.n_layers - 1, -1, -1):
        h_in = acts[l]
        grads[2 * l] = h_in.T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l:
            delta = delta @ net.weights[l].T
            if net.activation == "tanh":
                delta = delta * (1.0 - h_in * h_in)
    return loss, grads


@dataclass
class AdamState:
    moments1: list
    moments2: list
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, lr: float = 2e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr, **kw)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.moments1):
        raise DimensionError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.moments1):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise DimensionError(f"shape mismatch in adam_step: {p.shape} vs {np.shape(g)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.moments1, state.moments2):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --------------------------------------------------------------------------
# checkpoint file
#
#   offset 0   8 bytes   magic b"RAFMCKP1"
#   offset 8   8 bytes   header length N, uint64 little-endian
#   offset 16  N bytes   UTF-8 key-value header (see rafm.kvtext)
#   offset 16+N          every parameter as little-endian float64, order
#                        W0, b0, W1, b1, ...; W_l row-major (fan_in, fan_out)
# --------------------------------------------------------------------------

CKPT_MAGIC = b"RAFMCKP1"


def checkpoint_bytes(net: VelocityNet, meta: dict | None = None) -> bytes:
    header = {
        "format_version": 1,
        "widths": net.widths,
        "activation": net.activation,
        "time_embedding_dim": net.embedding.dim,
        "time_embedding_max_period": net.embedding.max_period,
    }
    header.update(meta or {})
    head = kvtext.dumps(header).encode("utf-8")
    body = b"".join(np.asarray(p, dtype="<f8").tobytes(order="C") for p in net.params())
    return CKPT_MAGIC + struct.pack("<Q", len(head)) + head + body


def save_checkpoint(path, net: VelocityNet, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(net, meta))


def load_checkpoint(path):
    """Return ``(net, header)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = kvtext.loads(raw[16:16 + n].decode("utf-8"))
    widths = header["widths"]
    emb = TimeEmbedding(header["time_embedding_dim"], header["time_embedding_max_period"])
    flat = np.frombuffer(raw[16 + n:], dtype="<f8").astype(DTYPE)
    expected = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    if flat.size != expected:
        raise DataError(f"{path}: {flat.size} parameters stored, header implies {expected}")
    weights, biases, pos = [], [], 0
    for a, b in zip(widths[:-1], widths[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(flat[pos:pos + b].copy())
        pos += b
    return VelocityNet(widths, weights, biases, emb, header["activation"]), header
