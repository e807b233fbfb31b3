"""Dense float64 array helpers with explicit shape and domain checks.

Every numeric value in the package is a C-contiguous ``numpy.float64``
array; this module is the single place that enforces that policy.  The
operations here are deliberately small: matrix product, a handful of
elementwise maps (including the interpolation ``lerp``) and reductions.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a contiguous float64 array (copying only when needed)."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def matmul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def _check_pair(a, b):
    if np.ndim(a) and np.ndim(b) and np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add(a, b):
    _check_pair(a, b)
    return as_tensor(a) + as_tensor(b)


def sub(a, b):
    _check_pair(a, b)
    return as_tensor(a) - as_tensor(b)


def mul(a, b):
    _check_pair(a, b)
    return as_tensor(a) * as_tensor(b)


def scale(a, s: float):
    return as_tensor(a) * float(s)


def lerp(a, b, t):
    """``(1 - t) * a + t * b``.

    ``t`` may be a scalar or, for batched use, an array broadcast along the
    leading axis of ``a`` and ``b``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"lerp endpoints differ in shape: {a.shape} vs {b.shape}")
    t = np.asarray(t, dtype=DTYPE)
    if t.ndim:
        if t.shape[0] != a.shape[0]:
            raise DimensionError(f"{t.shape[0]} interpolation times for batch of {a.shape[0]}")
        t = t.reshape((-1,) + (1,) * (a.ndim - 1))
    return (1.0 - t) * a + t * b


def elementwise(op: str, *args):
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``scale`` or ``lerp``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "scale": scale, "lerp": lerp}


def _nonempty(a) -> np.ndarray:
    a = as_tensor(a)
    if a.size == 0:
        raise DomainError("reduction over an empty tensor")
    return a


def total(a) -> float:
    return float(np.sum(_nonempty(a)))


def mean(a) -> float:
    return float(np.mean(_nonempty(a)))


def sq_norm(a) -> float:
    a = _nonempty(a).ravel()
    return float(a @ a)


def max_index(a) -> int:
    """Flat index of the largest element; the lowest index wins ties."""
    return int(np.argmax(_nonempty(a)))


def reduce(op: str, a):
    """Dispatch by name: ``sum``, ``mean``, ``sq_norm`` or ``max_index``."""
    fns = {"sum": total, "mean": mean, "sq_norm": sq_norm, "max_index": max_index}
    if op not in fns:
        raise DomainError(f"unknown reduction {op!r}")
    return fns[op](a)
