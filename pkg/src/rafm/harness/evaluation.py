"""Checkpoint -> synthesized slices -> metric report."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import kvtext
from ..data_synth import PhantomDataset, SliceSet, read_raw, write_raw
from ..errors import DataError, DimensionError
from ..flow_engine import OdeSolveConfig, euler_integrate
from ..metrics import MetricReport, evaluate_slices, write_report
from ..velocity_net import VelocityNet, load_checkpoint


@dataclass
class Translation:
    raw: np.ndarray  # (n, D) unclamped ODE endpoints
    clamped: np.ndarray  # raw clipped to [-1, 1]; metrics use this copy
    source: SliceSet


def translate(net: VelocityNet, slices: SliceSet, euler_steps: int = 10) -> Translation:
    if slices.images.shape[1] != net.sample_dim:
        raise DimensionError(
            f"checkpoint expects {net.sample_dim}-dim samples, data has {slices.images.shape[1]}"
        )
    raw = euler_integrate(net, slices.images, OdeSolveConfig(euler_steps))
    return Translation(raw, np.clip(raw, -1.0, 1.0), slices)


def translate_checkpoint(path, slices: SliceSet, euler_steps: int = 10) -> Translation:
    net, _ = load_checkpoint(path)
    return translate(net, slices, euler_steps)


def evaluate(synth, reference: SliceSet, swd_projections: int = 128, swd_seed: int = 0) -> MetricReport:
    """Metrics of ``synth`` (array or :class:`Translation`) against row-aligned ``reference``."""
    if isinstance(synth, Translation):
        synth = synth.clamped
    synth = np.asarray(synth, dtype=np.float64)
    if reference is None or len(reference) == 0:
        raise DataError("evaluation needs reference slices")
    if synth.shape[0] != len(reference):
        raise DataError(f"{synth.shape[0]} synthesized slices for {len(reference)} references")
    return evaluate_slices(synth, reference.images, reference.subjects, reference.image_shape,
                           swd_projections, swd_seed)


def save_translation(tr: Translation, out_dir) -> Path:
    """Write ``synth/s{subject}_{slice}_{raw|clamped}.bin`` plus an index."""
    out = Path(out_dir) / "synth"
    out.mkdir(parents=True, exist_ok=True)
    shape = tr.source.image_shape
    entries = []
    for i in range(tr.raw.shape[0]):
        stem = f"s{tr.source.subjects[i]:04d}_{tr.source.slices[i]:02d}"
        write_raw(out / f"{stem}_raw.bin", tr.raw[i].reshape(shape))
        write_raw(out / f"{stem}_clamped.bin", tr.clamped[i].reshape(shape))
        entries.append([int(tr.source.subjects[i]), int(tr.source.slices[i])])
    kvtext.dump({"image_shape": list(shape), "slices": entries}, out / "index.kv")
    return out


def load_translation(synth_dir, ds: PhantomDataset, which: str = "test") -> Translation:
    synth_dir = Path(synth_dir)
    if (synth_dir / "synth").is_dir():
        synth_dir = synth_dir / "synth"
    idx = kvtext.load(synth_dir / "index.kv")
    src, _ = ds.eval_pair(which)
    keys = list(zip(src.subjects.tolist(), src.slices.tolist()))
    stored = [tuple(e) for e in idx["slices"]]
    if stored != keys:
        raise DataError(f"translation in {synth_dir} does not match the {which} split of the dataset")
    raw = np.stack([read_raw(synth_dir / f"s{s:04d}_{k:02d}_raw.bin").ravel() for s, k in keys])
    clamped = np.stack([read_raw(synth_dir / f"s{s:04d}_{k:02d}_clamped.bin").ravel() for s, k in keys])
    return Translation(raw, clamped, src)


def evaluate_split(net: VelocityNet, ds: PhantomDataset, which: str = "test",
                   euler_steps: int = 10, out_dir=None):
    """Translate the degraded slices of a held-out split and score against the clean ones."""
    src, ref = ds.eval_pair(which)
    tr = translate(net, src, euler_steps)
    report = evaluate(tr, ref)
    if out_dir is not None:
        write_report(report, out_dir)
    return tr, report


def baseline_report(ds: PhantomDataset, which: str = "test") -> MetricReport:
    """Metrics of the untouched degraded input (identity translation)."""
    src, ref = ds.eval_pair(which)
    return evaluate(src.images, ref)
