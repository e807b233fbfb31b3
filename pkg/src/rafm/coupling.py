"""Endpoint couplings for one training step.

Four strategies, all returning a :class:`CouplingBatch` whose ``x0`` rows
are exactly the source mini-batch in its original order:

* ``random``     each source slice gets an independent uniform draw from the target batch
* ``batchwise``  one-to-one assignment maximizing total feature cosine within the batch
* ``retrieved``  top-1 cosine match from the rolling target memory bank (many-to-one)
* ``paired``     ground-truth counterpart; evaluation-protocol upper bound only
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .encoder import FrozenEncoder, cosine_matrix
from .errors import DataError, DomainError, RetrievalError
from .memory_bank import MemoryBank

log = logging.getLogger(__name__)

PROVENANCES = ("random", "batchwise", "retrieved", "paired")


@dataclass
class CouplingBatch:
    x0: np.ndarray  # (B, D) source endpoints
    x1: np.ndarray  # (B, D) target endpoints
    provenance: tuple  # one tag per pair
    similarity: np.ndarray  # per-pair feature cosine, NaN when not computed
    strategy: str
    x0_subjects: np.ndarray
    x1_subjects: np.ndarray

    def __len__(self) -> int:
        return self.x0.shape[0]

    @property
    def mean_similarity(self) -> float:
        sims = self.similarity[~np.isnan(self.similarity)]
        return float(sims.mean()) if sims.size else float("nan")

    def assert_unpaired(self, cbct_group, ct_group) -> None:
        """Raise unless every x0 is from ``cbct_group`` and every x1 from ``ct_group``."""
        cbct_group, ct_group = set(cbct_group), set(ct_group)
        for a, b in zip(self.x0_subjects.tolist(), self.x1_subjects.tolist()):
            if a == b or a not in cbct_group or b not in ct_group:
                raise DataError(f"subject leakage: pair ({a}, {b}) crosses the unpaired split")


def _check_nonempty(*batches):
    for b in batches:
        if b is None or len(b) == 0:
            raise DomainError("coupling needs non-empty batches")


def _pair_sims(encoder, x0, x1) -> np.ndarray:
    if encoder is None:
        return np.full(x0.shape[0], np.nan)
    z0 = encoder.encode_batch(x0)
    z1 = encoder.encode_batch(x1)
    return np.clip(np.einsum("ij,ij->i", z0, z1), -1.0, 1.0)


def couple_random(cbct, ct, rng, encoder: FrozenEncoder | None = None) -> CouplingBatch:
    """Pair each source slice with an independent uniform draw from ``ct``."""
    _check_nonempty(cbct, ct)
    pick = rng.integers(0, len(ct), size=len(cbct))
    x1 = ct.images[pick]
    return CouplingBatch(cbct.images.copy(), x1.copy(), ("random",) * len(cbct),
                         _pair_sims(encoder, cbct.images, x1), "random",
                         cbct.subjects.copy(), ct.subjects[pick].copy())


def optimal_assignment(sim: np.ndarray) -> np.ndarray:
    """Column index for each row maximizing the summed similarity."""
    rows, cols = linear_sum_assignment(sim, maximize=True)
    out = np.empty(sim.shape[0], dtype=np.int64)
    out[rows] = cols
    return out


def couple_batchwise(cbct, ct, encoder: FrozenEncoder) -> CouplingBatch:
    """One-to-one matching of equal-size batches on encoder-feature cosine."""
    _check_nonempty(cbct, ct)
    if len(cbct) != len(ct):
        raise DomainError(f"batchwise matching needs equal batch sizes, got {len(cbct)} and {len(ct)}")
    sim = cosine_matrix(encoder.encode_batch(cbct.images), encoder.encode_batch(ct.images))
    perm = optimal_assignment(sim)
    return CouplingBatch(cbct.images.copy(), ct.images[perm].copy(), ("batchwise",) * len(cbct),
                         sim[np.arange(len(cbct)), perm], "batchwise",
                         cbct.subjects.copy(), ct.subjects[perm].copy())


def couple_retrieval(cbct, bank: MemoryBank, encoder: FrozenEncoder,
                     fallback_ct=None, rng=None) -> CouplingBatch:
    """Top-1 cosine retrieval from ``bank`` for every source slice.

    An empty bank falls back to :func:`couple_random` over ``fallback_ct``
    (the current target mini-batch) with a logged warning.
    """
    _check_nonempty(cbct)
    if len(bank) == 0:
        if fallback_ct is None or rng is None:
            raise RetrievalError("empty memory bank and no fallback target batch")
        log.warning("memory bank empty; falling back to random coupling for this step")
        return couple_random(cbct, fallback_ct, rng, encoder)
    x1, sims, subj = [], [], []
    for x in cbct.images:
        sample, sim, ins = bank.retrieve_top1(encoder.encode(x))
        x1.append(sample)
        sims.append(sim)
        subj.append(bank.tag_of(ins))
    return CouplingBatch(cbct.images.copy(), np.array(x1), ("retrieved",) * len(cbct),
                         np.array(sims), "retrieval", cbct.subjects.copy(),
                         np.array(subj, dtype=np.int64))


def couple_paired(cbct, ct_counterpart, encoder: FrozenEncoder | None = None) -> CouplingBatch:
    """Identity pairing of row-aligned (degraded, clean) slices of the same subjects."""
    _check_nonempty(cbct)
    if ct_counterpart is None or len(ct_counterpart) != len(cbct):
        raise DataError("paired coupling needs a counterpart for every source slice")
    same = (np.array_equal(cbct.subjects, ct_counterpart.subjects)
            and np.array_equal(cbct.slices, ct_counterpart.slices))
    if not same:
        raise DataError("paired batch is not aligned by subject and slice id")
    return CouplingBatch(cbct.images.copy(), ct_counterpart.images.copy(), ("paired",) * len(cbct),
                         _pair_sims(encoder, cbct.images, ct_counterpart.images), "paired",
                         cbct.subjects.copy(), ct_counterpart.subjects.copy())
