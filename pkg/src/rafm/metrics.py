"""Image-quality and distribution metrics on the normalized [-1, 1] scale.

``swd`` (sliced Wasserstein on flattened slices) stands in for FID and
``struct_dice`` (threshold-mask Dice) stands in for an organ-segmentation
score.  Both substitutions are flagged wherever reports are written.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, kvtext
from .errors import DimensionError, DomainError
from .tensor_core import as_tensor

HU_WINDOW = (-1024.0, 2000.0)
HU_PER_UNIT = (HU_WINDOW[1] - HU_WINDOW[0]) / 2.0
PSNR_CAP = 99.0


def _same_shape(pred, ref):
    pred, ref = as_tensor(pred), as_tensor(ref)
    if pred.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    return pred, ref


def mae(pred, ref) -> float:
    pred, ref = _same_shape(pred, ref)
    return float(np.mean(np.abs(pred - ref)))


def mae_hu(pred, ref) -> float:
    """MAE rescaled from normalized units to the HU-like clipping window."""
    return mae(pred, ref) * HU_PER_UNIT


def psnr(pred, ref, data_range: float = 2.0) -> float:
    pred, ref = _same_shape(pred, ref)
    mse = float(np.mean((pred - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(data_range ** 2 / mse))


def ssim(pred, ref, window: int = 7, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 2.0) -> float:
    """Mean SSIM over every fully contained ``window x window`` uniform window.

    Local statistics are population (1/N) moments.
    """
    pred, ref = _same_shape(pred, ref)
    if pred.ndim != 2 or min(pred.shape) < window:
        raise DomainError(f"image {pred.shape} smaller than the {window}x{window} window")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mx = _kernels.box_mean(pred, window)
    my = _kernels.box_mean(ref, window)
    vx = _kernels.box_mean(pred * pred, window) - mx * mx
    vy = _kernels.box_mean(ref * ref, window) - my * my
    cxy = _kernels.box_mean(pred * ref, window) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(smap.mean())


def random_directions(dim: int, n: int, seed: int) -> np.ndarray:
    d = np.random.default_rng(seed).normal(size=(n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sliced_wasserstein(a, b, projections: int = 128, seed: int = 0) -> float:
    """Mean over random unit directions of the exact 1-D W2 between projected samples."""
    a = np.atleast_2d(as_tensor(a))
    b = np.atleast_2d(as_tensor(b))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DomainError("sliced Wasserstein needs non-empty sets")
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"sample dimension {a.shape[1]} vs {b.shape[1]}")
    dirs = random_directions(a.shape[1], projections, seed)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    dists = [_kernels.w2_sorted(np.ascontiguousarray(pa[:, k]), np.ascontiguousarray(pb[:, k]))
             for k in range(projections)]
    return float(np.mean(dists))


def struct_dice(pred, ref, threshold: float = 0.0) -> float:
    pred, ref = _same_shape(pred, ref)
    a = pred > threshold
    b = ref > threshold
    denom = int(a.sum() + b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / denom


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

SLICE_METRICS = ("mae", "mae_hu", "ssim", "psnr", "struct_dice")


@dataclass
class MetricReport:
    mae: float
    mae_hu: float
    ssim: float
    psnr: float
    swd: float
    struct_dice: float
    per_subject: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "mae": self.mae, "mae_hu": self.mae_hu, "ssim": self.ssim, "psnr": self.psnr,
            "swd": self.swd, "struct_dice": self.struct_dice,
            "n_subjects": len(self.per_subject),
            "swd_note": "sliced Wasserstein on flattened slices, FID stand-in",
            "struct_dice_note": "threshold-mask Dice, segmentation-score stand-in",
        }

    def write_csv(self, path) -> None:
        cols = ["subject", "n_slices", *SLICE_METRICS, "swd"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.per_subject:
                w.writerow([row["subject"], row["n_slices"],
                            *(_fmt(row[k]) for k in SLICE_METRICS), _fmt(row["swd"])])
            w.writerow(["aggregate", sum(r["n_slices"] for r in self.per_subject),
                        *(_fmt(getattr(self, k)) for k in SLICE_METRICS), _fmt(self.swd)])

    def write_summary(self, path) -> None:
        kvtext.dump(self.summary(), path)


def _fmt(x: float) -> str:
    return repr(float(x))


def evaluate_slices(synth, ref, subjects, image_shape, swd_projections: int = 128,
                    swd_seed: int = 0) -> MetricReport:
    """Per-slice metrics averaged within subject, then across subjects.

    SWD compares the full synthesized set against the full reference set
    (and, per subject, that subject's slices against its references).
    """
    synth = as_tensor(synth).reshape(len(subjects), -1)
    ref = as_tensor(ref).reshape(len(subjects), -1)
    if synth.shape != ref.shape:
        raise DimensionError(f"synthesized {synth.shape} vs reference {ref.shape}")
    subjects = np.asarray(subjects)
    rows = []
    for sid in np.unique(subjects):
        idx = np.flatnonzero(subjects == sid)
        vals = {k: [] for k in SLICE_METRICS}
        for i in idx:
            p = synth[i].reshape(image_shape)
            r = ref[i].reshape(image_shape)
            vals["mae"].append(mae(p, r))
            vals["mae_hu"].append(mae_hu(p, r))
            vals["ssim"].append(ssim(p, r))
            vals["psnr"].append(psnr(p, r))
            vals["struct_dice"].append(struct_dice(p, r))
        row = {"subject": int(sid), "n_slices": int(idx.size)}
        row.update({k: float(np.mean(v)) for k, v in vals.items()})
        row["swd"] = sliced_wasserstein(synth[idx], ref[idx], swd_projections, swd_seed)
        rows.append(row)
    agg = {k: float(np.mean([r[k] for r in rows])) for k in SLICE_METRICS}
    swd = sliced_wasserstein(synth, ref, swd_projections, swd_seed)
    return MetricReport(agg["mae"], agg["mae_hu"], agg["ssim"], agg["psnr"], swd,
                        agg["struct_dice"], rows)


def read_report_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(report: MetricReport, out_dir, stem: str = "metrics") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / f"{stem}.csv")
    report.write_summary(out_dir / f"{stem}_summary.kv")
