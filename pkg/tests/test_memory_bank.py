import numpy as np
import pytest

from oracles import DequeBank, linear_scan_top1
from rafm.errors import DimensionError, RetrievalError
from rafm.memory_bank import MemoryBank


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _contents(bank):
    return bank.samples[:, 0].tolist()


def test_fifo_eviction():
    b = MemoryBank(2, 2, 1)
    for v in (1.0, 2.0, 3.0):
        b.enqueue(_unit([[1, 0]]), [[v]])
    assert _contents(b) == [2.0, 3.0]


def test_batch_into_empty_bank():
    b = MemoryBank(4, 2, 1)
    b.enqueue(_unit(np.ones((4, 2))), [[1], [2], [3], [4]])
    assert _contents(b) == [1, 2, 3, 4]


def test_batch_overflow_keeps_last():
    b = MemoryBank(3, 2, 1)
    b.enqueue(_unit(np.ones((5, 2))), np.arange(5.0).reshape(5, 1))
    assert _contents(b) == [2, 3, 4]
    assert b.insertion_ids.tolist() == [2, 3, 4]


def test_zero_capacity_is_noop():
    b = MemoryBank(0, 2, 1)
    b.enqueue(_unit([[1, 0]]), [[1.0]])
    assert len(b) == 0 and b.inserted == 1
    with pytest.raises(RetrievalError):
        b.retrieve_top1(_unit([1, 0]))


def test_dimension_checks():
    b = MemoryBank(2, 3, 2)
    with pytest.raises(DimensionError):
        b.enqueue(np.ones((1, 2)), np.ones((1, 2)))
    b.enqueue(_unit(np.ones((1, 3))), np.ones((1, 2)))
    with pytest.raises(DimensionError):
        b.retrieve_top1(np.ones(2))


def test_matches_reference_queue_over_random_ops():
    r = np.random.default_rng(0)
    for cap in (1, 3, 7, 16):
        bank, ref = MemoryBank(cap, 4, 3), DequeBank(cap)
        for _ in range(300):
            n = int(r.integers(1, 6))
            f = _unit(r.normal(size=(n, 4)))
            s = r.normal(size=(n, 3))
            bank.enqueue(f, s)
            ref.enqueue(f, s)
            assert len(bank) == len(ref.q) <= cap
            assert bank.insertion_ids.tolist() == [e[0] for e in ref.q]
            np.testing.assert_array_equal(bank.samples, np.array([e[2] for e in ref.q]))
            np.testing.assert_array_equal(bank.features, np.array([e[1] for e in ref.q]))


def test_own_feature_retrieved_with_similarity_one():
    r = np.random.default_rng(1)
    f = _unit(r.normal(size=(10, 8)))
    b = MemoryBank(10, 8, 8)
    b.enqueue(f, f)
    sample, sim, ins = b.retrieve_top1(f[6])
    assert ins == 6 and sim == pytest.approx(1.0)
    np.testing.assert_array_equal(sample, f[6])


def test_orthogonal_bank():
    b = MemoryBank(5, 5, 1)
    b.enqueue(np.eye(5), np.arange(5.0).reshape(5, 1))
    assert b.retrieve_top1(np.eye(5)[2])[2] == 2


def test_ties_break_to_oldest_after_wraparound():
    b = MemoryBank(4, 2, 1)
    same = _unit([1.0, 1.0])
    b.enqueue(_unit([[1, 0], [0, 1]]), [[0], [1]])
    b.enqueue(np.stack([same] * 3), [[2], [3], [4]])  # evicts id 0; ring wraps
    assert b.insertion_ids.tolist() == [1, 2, 3, 4]
    sample, _, ins = b.retrieve_top1(same)
    assert ins == 2 and sample[0] == 2.0


def test_matches_linear_scan_oracle_with_ties():
    r = np.random.default_rng(2)
    feats = _unit(r.normal(size=(100, 16)))
    feats[50] = feats[10]  # exact duplicates create ties
    feats[99] = feats[10]
    feats[73] = feats[5]
    bank = MemoryBank(100, 16, 16)
    bank.enqueue(feats[:40], feats[:40])
    bank.enqueue(feats[40:], feats[40:])
    queries = _unit(r.normal(size=(50, 16)))
    queries[:3] = feats[[10, 5, 99]]
    entries = list(zip(range(100), feats))
    for q in queries:
        want_id, want_score = linear_scan_top1(entries, q)
        _, sim, ins = bank.retrieve_top1(q)
        assert ins == want_id
        assert sim == pytest.approx(min(1.0, want_score), abs=1e-12)
    assert bank.retrieve_top1(feats[99])[2] == 10


def test_tags_follow_entries():
    b = MemoryBank(2, 2, 1)
    b.enqueue(_unit([[1, 0], [0, 1], [1, 1]]), [[0], [1], [2]], tags=[7, 8, 9])
    assert b.tags.tolist() == [8, 9]
    assert b.tag_of(2) == 9
    with pytest.raises(KeyError):
        b.tag_of(0)
