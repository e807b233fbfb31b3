import math

import numpy as np
import pytest

from oracles import ssim_direct, w2_dense_quantile
from rafm.errors import DimensionError, DomainError
from rafm.metrics import (HU_PER_UNIT, MetricReport, evaluate_slices, mae, mae_hu, psnr,
                          random_directions, read_report_csv, sliced_wasserstein, ssim,
                          struct_dice, write_report)


def test_mae_cases(rng):
    x = rng.uniform(-1, 1, size=(8, 8))
    assert mae(x, x) == 0.0
    assert mae(x + 0.1, x) == pytest.approx(0.1)
    y = rng.uniform(-1, 1, size=(8, 8))
    want = sum(abs(float(a) - float(b)) for a, b in zip(x.ravel(), y.ravel())) / 64
    assert mae(x, y) == pytest.approx(want, rel=1e-13)
    assert mae_hu(x, y) == pytest.approx(want * 1512.0)
    assert HU_PER_UNIT == 1512.0
    with pytest.raises(DimensionError):
        mae(x, x[:4])


def test_psnr_cases(rng):
    x = rng.uniform(-1, 1, size=(8, 8))
    assert psnr(x, x) == 99.0
    assert psnr(np.full(4, 2.0), np.zeros(4)) == pytest.approx(0.0)
    y = rng.uniform(-1, 1, size=(8, 8))
    mse = sum((float(a) - float(b)) ** 2 for a, b in zip(x.ravel(), y.ravel())) / 64
    assert psnr(x, y) == pytest.approx(10 * math.log10(4 / mse), rel=1e-12)


def test_ssim_identical_and_anticorrelated(rng):
    x = rng.uniform(-1, 1, size=(16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    # checkerboard: every window is (nearly) zero-mean
    z = 0.5 * (-1.0) ** np.add.outer(np.arange(16), np.arange(16)) + 0.01 * x
    assert ssim(z, -z) < 0


@pytest.mark.parametrize("shape", [(16, 16), (7, 7), (9, 12)])
def test_ssim_matches_direct_formula(shape):
    r = np.random.default_rng(shape[1])
    x, y = r.uniform(-1, 1, size=shape), r.uniform(-1, 1, size=shape)
    assert abs(ssim(x, y) - ssim_direct(x, y)) <= 1e-8


def test_ssim_too_small():
    with pytest.raises(DomainError):
        ssim(np.ones((6, 6)), np.ones((6, 6)))


def test_swd_zero_on_same_multiset(rng):
    a = rng.normal(size=(50, 4))
    assert sliced_wasserstein(a, a[rng.permutation(50)]) == pytest.approx(0.0, abs=1e-12)


def test_swd_point_masses():
    a = np.zeros((1, 1))
    assert sliced_wasserstein(a, np.full((1, 1), 2.5), projections=4) == pytest.approx(2.5)


def test_swd_unequal_sizes_exact():
    # unequal sample counts exercise the breakpoint merge
    a, b = np.array([[0.0], [1.0]]), np.array([[0.0], [0.0], [3.0]])
    want = w2_dense_quantile(a[:, 0], b[:, 0], grid=600_000)
    assert sliced_wasserstein(a, b, projections=3) == pytest.approx(want, rel=1e-6)


def test_swd_gaussians_match_dense_quantile_oracle():
    r = np.random.default_rng(0)
    a = r.normal(size=(400, 2))
    b = r.normal(size=(500, 2)) + np.array([1.5, -0.5])
    dirs = random_directions(2, 128, 7)
    want = np.mean([w2_dense_quantile(a @ d, b @ d) for d in dirs])
    got = sliced_wasserstein(a, b, projections=128, seed=7)
    assert abs(got - want) <= 0.02 * want


def test_swd_errors():
    with pytest.raises(DimensionError):
        sliced_wasserstein(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(DomainError):
        sliced_wasserstein(np.ones((0, 2)), np.ones((3, 2)))


def test_dice_cases():
    a = np.zeros((4, 4))
    a[:2] = 1
    assert struct_dice(a, a) == 1.0
    assert struct_dice(a, 1 - a) == 0.0
    b = np.zeros((4, 4))
    b[1:3] = 1  # rows 1..2; overlap is row 1 (4 pixels)
    assert struct_dice(a, b) == pytest.approx(2 * 4 / (8 + 8))
    assert struct_dice(-np.ones(5), -np.ones(5)) == 1.0


def test_symmetries(rng):
    a, b = rng.uniform(-1, 1, size=(2, 12, 12))
    assert mae(a, b) == mae(b, a)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-10


def test_evaluate_slices_and_report_files(tmp_path, rng):
    ref = rng.uniform(-1, 1, size=(6, 64))
    synth = ref + rng.normal(scale=0.05, size=ref.shape)
    subjects = np.array([3, 3, 5, 5, 5, 8])
    rep = evaluate_slices(synth, ref, subjects, (8, 8), swd_projections=16)
    assert len(rep.per_subject) == 3
    per = [np.mean([mae(synth[i], ref[i]) for i in np.flatnonzero(subjects == s)]) for s in (3, 5, 8)]
    assert rep.mae == pytest.approx(np.mean(per))
    assert all(np.isfinite(v) for k, v in rep.summary().items() if not k.endswith("note"))
    write_report(rep, tmp_path)
    rows = read_report_csv(tmp_path / "metrics.csv")
    assert [r["subject"] for r in rows] == ["3", "5", "8", "aggregate"]
    assert float(rows[-1]["mae"]) == rep.mae
    assert (tmp_path / "metrics_summary.kv").read_text().count("swd_note") == 1
    assert isinstance(rep, MetricReport)
