"""Fixed-capacity FIFO bank of target-domain (feature, sample) entries.

Storage is a ring buffer; logical position 0 is always the oldest live
entry.  Retrieval scans entries oldest-first with a strict ``>`` so ties
resolve to the lowest insertion index regardless of where the ring pointer
happens to sit.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DimensionError, RetrievalError
from .tensor_core import as_tensor


class MemoryBank:
    def __init__(self, capacity: int, feature_dim: int, sample_dim: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = int(capacity)
        self.feature_dim = int(feature_dim)
        self.sample_dim = int(sample_dim)
        cap = max(self.capacity, 1)
        self._feats = np.zeros((cap, self.feature_dim))
        self._samples = np.zeros((cap, self.sample_dim))
        self._ids = np.full(cap, -1, dtype=np.int64)  # insertion index
        self._tags = np.full(cap, -1, dtype=np.int64)  # subject id of the stored sample
        self._start = 0
        self._count = 0
        self.inserted = 0  # total entries ever enqueued

    def __len__(self) -> int:
        return self._count

    def _rows(self) -> np.ndarray:
        return (self._start + np.arange(self._count)) % self._feats.shape[0]

    def enqueue(self, features, samples, tags=None) -> "MemoryBank":
        """Append a batch in order, evicting the oldest entries beyond capacity.

        A zero-capacity bank ignores every enqueue.
        """
        features = np.atleast_2d(as_tensor(features))
        samples = as_tensor(samples).reshape(features.shape[0], -1)
        if features.shape[1] != self.feature_dim or samples.shape[1] != self.sample_dim:
            raise DimensionError(
                f"bank stores ({self.feature_dim},) features and ({self.sample_dim},) samples, "
                f"got {features.shape} and {samples.shape}"
            )
        n = features.shape[0]
        tags = np.full(n, -1) if tags is None else np.asarray(tags, dtype=np.int64)
        if self.capacity == 0:
            self.inserted += n
            return self
        cap = self.capacity
        for i in range(n):
            if self._count < cap:
                row = (self._start + self._count) % cap
                self._count += 1
            else:
                row = self._start
                self._start = (self._start + 1) % cap
            self._feats[row] = features[i]
            self._samples[row] = samples[i]
            self._ids[row] = self.inserted
            self._tags[row] = tags[i]
            self.inserted += 1
        return self

    def retrieve_top1(self, query):
        """Return ``(sample, similarity, insertion_index)`` of the best cosine match."""
        if self._count == 0:
            raise RetrievalError("retrieval from an empty memory bank")
        query = as_tensor(query)
        if query.shape != (self.feature_dim,):
            raise DimensionError(f"query shape {query.shape}, bank features ({self.feature_dim},)")
        pos, score = _kernels.top1_scan(self._feats, self._start, self._count, query)
        row = (self._start + pos) % self._feats.shape[0]
        sim = min(1.0, max(-1.0, score))
        return self._samples[row].copy(), sim, int(self._ids[row])

    def tag_of(self, insertion_index: int) -> int:
        rows = self._rows()
        hit = rows[self._ids[rows] == insertion_index]
        if hit.size == 0:
            raise KeyError(f"entry {insertion_index} is not in the bank")
        return int(self._tags[hit[0]])

    # read-only views in logical (oldest-first) order
    @property
    def features(self) -> np.ndarray:
        return self._feats[self._rows()]

    @property
    def samples(self) -> np.ndarray:
        return self._samples[self._rows()]

    @property
    def insertion_ids(self) -> np.ndarray:
        return self._ids[self._rows()]

    @property
    def tags(self) -> np.ndarray:
        return self._tags[self._rows()]
