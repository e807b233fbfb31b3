"""Rectified-flow regression loss over an empirical coupling, and Euler transport."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericError
from .tensor_core import as_tensor, lerp, sub
from .velocity_net import VelocityNet, backward


@dataclass(frozen=True)
class FlowSample:
    x0: np.ndarray
    x1: np.ndarray
    t: float
    x_t: np.ndarray
    u_t: np.ndarray


def make_flow_sample(pair, t: float) -> FlowSample:
    x0, x1 = (as_tensor(v) for v in pair)
    if x0.shape != x1.shape:
        raise DimensionError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t={t} outside [0, 1]")
    return FlowSample(x0, x1, float(t), lerp(x0, x1, t), sub(x1, x0))


@dataclass(frozen=True)
class OdeSolveConfig:
    steps: int = 10

    def __post_init__(self):
        if int(self.steps) < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps}")


def rf_loss_batch(net: VelocityNet, coupling, rng=None, ts=None):
    """Mean over pairs of ``||v(x_t, t) - (x1 - x0)||^2`` with one ``t ~ U(0,1)`` per pair.

    ``coupling`` is anything with ``x0``/``x1`` arrays of shape ``(B, D)``
    (normally a :class:`rafm.coupling.CouplingBatch`).  Pass ``ts`` to fix
    the interpolation times instead of drawing them from ``rng``.

    Returns ``(loss, grads, ts)``.
    """
    x0 = as_tensor(coupling.x0)
    x1 = as_tensor(coupling.x1)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise DomainError("empty coupling")
    if x0.shape != x1.shape:
        raise DimensionError(f"coupling endpoints differ: {x0.shape} vs {x1.shape}")
    if ts is None:
        if rng is None:
            raise DomainError("either rng or explicit ts is required")
        ts = rng.uniform(0.0, 1.0, size=x0.shape[0])
    ts = np.asarray(ts, dtype=np.float64)
    x_t = lerp(x0, x1, ts)
    loss, grads = backward(net, x_t, ts, x1 - x0)
    return loss, grads, ts


def euler_integrate(net: VelocityNet, x0, cfg: OdeSolveConfig = OdeSolveConfig()) -> np.ndarray:
    """Forward Euler from t=0 to t=1 with the velocity taken at each step's left end.

    ``x0`` may be a single flattened sample ``(D,)`` or a batch ``(N, D)``.
    """
    x = as_tensor(x0)
    single = x.ndim == 1
    x = x.reshape(1, -1) if single else x.copy()
    n = int(cfg.steps)
    h = 1.0 / n
    for k in range(n):
        x = x + h * net.forward_batch(x, np.full(x.shape[0], k / n))
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite state after Euler step {k}")
    return x[0] if single else x
