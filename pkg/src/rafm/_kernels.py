"""Hot inner loops, each with a numba-compiled path and a pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``RAFM_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).
Both paths stay importable so tests and ``benchmarks/bench_kernels.py``
can compare them directly.

Kernels:

* ``top1_scan``     top-1 dot-product scan over a ring buffer, oldest entry wins ties
* ``box_mean``      mean over every fully-contained ``w x w`` window (valid mode)
* ``w2_sorted``     exact 1-D 2-Wasserstein distance between two sorted samples
* ``patch_mean``    non-overlapping ``p x p`` average pooling
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FLAG = os.environ.get("RAFM_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# pure-numpy implementations
# --------------------------------------------------------------------------


def top1_scan_numpy(feats, start, count, query):
    """Return ``(logical_index, score)`` of the best dot product.

    ``feats`` is the physical ring storage; logical index 0 is the oldest
    live entry at physical row ``start``.
    """
    cap = feats.shape[0]
    rows = (start + np.arange(count)) % cap
    # row-wise multiply+sum keeps identical rows bitwise identical (no BLAS blocking)
    scores = (feats[rows] * query).sum(axis=1)
    best = int(np.argmax(scores))  # argmax returns the first maximum
    return best, float(scores[best])


def box_mean_numpy(img, w):
    windows = sliding_window_view(img, (w, w))
    return windows.mean(axis=(-2, -1))


def w2_sorted_numpy(a, b):
    n, m = a.shape[0], b.shape[0]
    # quantile breakpoints on the common grid k / (n*m), kept integral
    bps = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    widths = np.diff(np.concatenate(([0], bps)))
    ia = (bps - 1) // m
    ib = (bps - 1) // n
    acc = np.sum(widths * (a[ia] - b[ib]) ** 2)
    return float(np.sqrt(acc / (n * m)))


def patch_mean_numpy(img, p):
    h, w = img.shape
    return img.reshape(h // p, p, w // p, p).mean(axis=(1, 3))


# --------------------------------------------------------------------------
# loop implementations (compiled by numba when enabled)
# --------------------------------------------------------------------------


def _top1_scan_loop(feats, start, count, query):
    cap = feats.shape[0]
    d = feats.shape[1]
    best = -1
    best_score = -np.inf
    for i in range(count):
        r = (start + i) % cap
        s = 0.0
        for k in range(d):
            s += feats[r, k] * query[k]
        if s > best_score:  # strict: earliest logical index wins ties
            best_score = s
            best = i
    return best, best_score


def _box_mean_loop(img, w):
    h, wd = img.shape
    oh = h - w + 1
    ow = wd - w + 1
    out = np.empty((oh, ow))
    inv = 1.0 / (w * w)
    for i in range(oh):
        for j in range(ow):
            s = 0.0
            for a in range(w):
                for b in range(w):
                    s += img[i + a, j + b]
            out[i, j] = s * inv
    return out


def _w2_sorted_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    i = 0
    j = 0
    prev = 0
    acc = 0.0
    while i < n and j < m:
        na = (i + 1) * m
        nb = (j + 1) * n
        nxt = na if na < nb else nb
        d = a[i] - b[j]
        acc += (nxt - prev) * d * d
        prev = nxt
        if na == nxt:
            i += 1
        if nb == nxt:
            j += 1
    return np.sqrt(acc / (n * m))


def _patch_mean_loop(img, p):
    h, w = img.shape
    oh = h // p
    ow = w // p
    out = np.zeros((oh, ow))
    inv = 1.0 / (p * p)
    for i in range(oh):
        for j in range(ow):
            s = 0.0
            for a in range(p):
                for b in range(p):
                    s += img[i * p + a, j * p + b]
            out[i, j] = s * inv
    return out


if HAS_NUMBA:
    top1_scan_jit = numba.njit(cache=True)(_top1_scan_loop)
    box_mean_jit = numba.njit(cache=True)(_box_mean_loop)
    w2_sorted_jit = numba.njit(cache=True)(_w2_sorted_loop)
    patch_mean_jit = numba.njit(cache=True)(_patch_mean_loop)
else:  # pragma: no cover
    top1_scan_jit = _top1_scan_loop
    box_mean_jit = _box_mean_loop
    w2_sorted_jit = _w2_sorted_loop
    patch_mean_jit = _patch_mean_loop


def top1_scan(feats, start, count, query):
    if USE_NUMBA:
        i, s = top1_scan_jit(feats, start, count, query)
        return int(i), float(s)
    return top1_scan_numpy(feats, start, count, query)


def box_mean(img, w):
    if USE_NUMBA:
        return box_mean_jit(np.ascontiguousarray(img, dtype=np.float64), w)
    return box_mean_numpy(img, w)


def w2_sorted(a, b):
    if USE_NUMBA:
        return float(w2_sorted_jit(a, b))
    return w2_sorted_numpy(a, b)


def patch_mean(img, p):
    if USE_NUMBA:
        return patch_mean_jit(np.ascontiguousarray(img, dtype=np.float64), p)
    return patch_mean_numpy(img, p)
