"""Frozen slice encoder: patch-mean pooling, seeded Gaussian projection, L2 norm.

Nothing here is trained.  Two encoders built with the same seed, feature
dimension and image shape produce bitwise-identical features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, DimensionError, NumericError
from .tensor_core import as_tensor

POOLED_GRID = 8


@dataclass(frozen=True)
class FrozenEncoder:
    image_shape: tuple = (16, 16)
    dim: int = 64
    seed: int = 0
    pool: int = 0  # patch edge; 0 picks image_size // POOLED_GRID
    projection: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h, w = self.image_shape
        if not self.pool:
            object.__setattr__(self, "pool", max(1, h // POOLED_GRID))
        if h % self.pool or w % self.pool:
            raise DimensionError(f"image shape {self.image_shape} not divisible by pool {self.pool}")
        pooled = (h // self.pool) * (w // self.pool)
        rng = np.random.default_rng(self.seed)
        proj = rng.normal(0.0, 1.0 / np.sqrt(pooled), size=(self.dim, pooled))
        proj.setflags(write=False)
        object.__setattr__(self, "projection", proj)

    def pooled(self, x) -> np.ndarray:
        img = as_tensor(x).reshape(self.image_shape)
        return _kernels.patch_mean(img, self.pool).ravel()

    def encode(self, x) -> np.ndarray:
        return encode(self, x)

    def encode_batch(self, xs) -> np.ndarray:
        xs = as_tensor(xs)
        return np.stack([encode(self, x) for x in xs.reshape(xs.shape[0], -1)])


def encode(enc: FrozenEncoder, x) -> np.ndarray:
    """Unit-norm feature vector of length ``enc.dim`` for one image."""
    x = as_tensor(x)
    if x.size != enc.image_shape[0] * enc.image_shape[1]:
        raise DimensionError(f"encoder expects {enc.image_shape} images, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite pixel in encoder input")
    if not np.any(x):
        raise DegenerateInputError("all-zero image has no direction to normalize")
    z = enc.projection @ enc.pooled(x)
    norm = np.sqrt(z @ z)
    if norm == 0.0:
        raise DegenerateInputError("projected feature is zero")
    return z / norm


def cosine(a, b) -> float:
    """Cosine of two unit-norm features, clamped to [-1, 1]."""
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


def cosine_matrix(za, zb) -> np.ndarray:
    return np.clip(as_tensor(za) @ as_tensor(zb).T, -1.0, 1.0)
