"""Procedural paired-by-construction phantoms and the subject-level unpaired split.

Each subject is one anatomy class (an ellipse layout inside a body outline)
with subject-level perturbations; its slices add small per-slice jitter to
every ellipse centre.  The clean image plays the CT role, the degraded copy
(global bias + fixed streak pattern + Gaussian noise, clipped to [-1, 1])
plays the CBCT role.  Intensities follow the normalized convention where
air is -1.

Dataset directory layout::

    index.kv                       key-value text (rafm.kvtext)
    slices/s{subject:04d}_{slice:02d}_{clean|degraded}.bin

Each ``.bin`` file is a 16-byte header of two little-endian uint64
(height, width) followed by height*width little-endian float64 values,
row-major.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kvtext
from .errors import DataError, DomainError, GenerationError

BACKGROUND = -1.0
BODY = 0.25

# (cx, cy, ax, ay, angle_deg, value) in [-1, 1] image coordinates
CLASS_LAYOUTS = {
    0: [(-0.45, 0.0, 0.28, 0.28, 0, 0.9), (0.45, 0.0, 0.28, 0.28, 0, 0.9)],
    1: [(0.0, 0.05, 0.5, 0.35, 0, -0.6)],
    2: [(0.0, -0.3, 0.55, 0.2, 0, 0.9), (0.0, 0.3, 0.22, 0.22, 0, -0.6)],
    3: [(-0.4, 0.0, 0.15, 0.45, 0, -0.5), (0.4, 0.0, 0.15, 0.45, 0, -0.5),
        (0.0, 0.0, 0.18, 0.18, 0, 0.95)],
}
BODY_ELLIPSE = (0.0, 0.0, 0.85, 0.62, 0, BODY)
SUPERSAMPLE = 4


@dataclass(frozen=True)
class DatasetConfig:
    n_subjects: int = 46
    slices_per_subject: int = 8
    image_size: int = 16
    n_classes: int = 4
    jitter: float = 0.02  # per-slice centre jitter, fraction of image width
    bias: float = 0.15
    streak_amplitude: float = 0.2
    streak_frequencies: tuple = (1.0, 2.0, 3.0)
    noise_sigma: float = 0.05
    fg_threshold: float = 0.0
    fg_range: tuple = (0.10, 0.70)
    max_retries: int = 20
    split_ratios: tuple = (7, 1, 2)

    def __post_init__(self):
        if self.n_subjects < 1 or self.slices_per_subject < 1 or self.image_size < 4:
            raise DomainError("dataset sizes must be positive (image_size >= 4)")
        if not 1 <= self.n_classes <= len(CLASS_LAYOUTS):
            raise DomainError(f"n_classes must be in 1..{len(CLASS_LAYOUTS)}")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class Subject:
    subject_id: int
    label: int
    ellipses: list  # perturbed (cx, cy, ax, ay, angle, value) rows, body first
    slices: list = field(default_factory=list)


@dataclass
class SliceSet:
    """Flattened images plus their provenance, one row per slice."""

    images: np.ndarray  # (n, H*W)
    subjects: np.ndarray
    slices: np.ndarray
    labels: np.ndarray
    image_shape: tuple

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, idx) -> "SliceSet":
        idx = np.asarray(idx, dtype=np.int64)
        return SliceSet(self.images[idx], self.subjects[idx], self.slices[idx],
                        self.labels[idx], self.image_shape)


@dataclass(frozen=True)
class DatasetSplit:
    train_cbct: tuple
    train_ct: tuple
    val: tuple
    test: tuple

    def __post_init__(self):
        groups = [set(self.train_cbct), set(self.train_ct), set(self.val), set(self.test)]
        for i in range(4):
            for j in range(i + 1, 4):
                if groups[i] & groups[j]:
                    raise DataError(f"split groups {i} and {j} overlap: {groups[i] & groups[j]}")

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(**{k: tuple(v) for k, v in d.items()})


# --------------------------------------------------------------------------
# rendering and degradation
# --------------------------------------------------------------------------


def _grid(size: int, supersample: int = 1):
    n = size * supersample
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    return np.meshgrid(c, c)  # x varies along columns, y along rows


def render(ellipses, size: int) -> np.ndarray:
    """Paint ellipses in order (later ones overwrite) and box-downsample."""
    xx, yy = _grid(size, SUPERSAMPLE)
    img = np.full(xx.shape, BACKGROUND)
    for cx, cy, ax, ay, angle, value in ellipses:
        th = np.deg2rad(angle)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        img[(u / ax) ** 2 + (v / ay) ** 2 <= 1.0] = value
    s = SUPERSAMPLE
    return img.reshape(size, s, size, s).mean(axis=(1, 3))


def streak_field(cfg: DatasetConfig, seed: int) -> np.ndarray:
    """Fixed stripe artifact for a dataset: mean of oriented sinusoids, scaled by amplitude."""
    rng = np.random.default_rng([seed, 0x5EED])
    xx, yy = _grid(cfg.image_size)
    field_ = np.zeros_like(xx)
    for f in cfg.streak_frequencies:
        th = rng.uniform(0.0, np.pi)
        ph = rng.uniform(0.0, 2 * np.pi)
        field_ += np.sin(np.pi * f * (xx * np.cos(th) + yy * np.sin(th)) + ph)
    if cfg.streak_frequencies:
        field_ /= len(cfg.streak_frequencies)
    return cfg.streak_amplitude * field_


def slice_noise_rng(seed: int, subject_id: int, slice_id: int):
    return np.random.default_rng([seed, subject_id, slice_id, 1])


def degrade(clean, cfg: DatasetConfig, streak, noise_rng) -> np.ndarray:
    noise = noise_rng.normal(0.0, 1.0, size=clean.shape) * cfg.noise_sigma
    return np.clip(clean + cfg.bias + streak + noise, -1.0, 1.0)


def _subject_ellipses(label: int, rng) -> list:
    cx, cy, ax, ay, ang, val = BODY_ELLIPSE
    body_scale = rng.uniform(0.97, 1.03, size=2)
    rows = [(cx, cy, ax * body_scale[0], ay * body_scale[1], ang, val)]
    for cx, cy, ax, ay, ang, val in CLASS_LAYOUTS[label]:
        d = rng.uniform(-0.05, 0.05, size=2)
        s = rng.uniform(0.88, 1.12, size=2)
        rows.append((cx + d[0], cy + d[1], ax * s[0], ay * s[1],
                     ang + rng.uniform(-8, 8), val + rng.uniform(-0.05, 0.05)))
    return rows


def _slice_ellipses(base, cfg: DatasetConfig, rng) -> list:
    sigma = 2.0 * cfg.jitter  # image width is 2 in normalized coordinates
    out = []
    for cx, cy, ax, ay, ang, val in base:
        j = rng.normal(0.0, sigma, size=2)
        out.append((cx + j[0], cy + j[1], ax, ay, ang, val))
    return out


def _foreground_ok(img, cfg: DatasetConfig) -> bool:
    frac = float(np.mean(img > cfg.fg_threshold))
    return cfg.fg_range[0] <= frac <= cfg.fg_range[1]


class PhantomDataset:
    """All slices of all subjects, in subject-major order, plus the unpaired split."""

    def __init__(self, cfg, seed, subjects, clean, degraded, subject_idx, slice_idx, labels, split):
        self.cfg = cfg
        self.seed = int(seed)
        self.subjects = subjects
        self.clean = clean
        self.degraded = degraded
        self.subject_idx = subject_idx
        self.slice_idx = slice_idx
        self.labels = labels
        self.split = split

    @property
    def image_shape(self) -> tuple:
        return (self.cfg.image_size, self.cfg.image_size)

    def select(self, subject_ids, modality: str) -> SliceSet:
        if modality not in ("clean", "degraded"):
            raise DomainError(f"modality must be 'clean' or 'degraded', got {modality!r}")
        idx = np.flatnonzero(np.isin(self.subject_idx, list(subject_ids)))
        imgs = (self.clean if modality == "clean" else self.degraded)[idx]
        return SliceSet(imgs.reshape(len(idx), -1).copy(), self.subject_idx[idx].copy(),
                        self.slice_idx[idx].copy(), self.labels[idx].copy(), self.image_shape)

    def train_cbct(self) -> SliceSet:
        return self.select(self.split.train_cbct, "degraded")

    def train_ct(self) -> SliceSet:
        return self.select(self.split.train_ct, "clean")

    def paired_train(self):
        """(degraded, clean) slices of the CBCT training group, row-aligned."""
        return self.select(self.split.train_cbct, "degraded"), self.select(self.split.train_cbct, "clean")

    def eval_pair(self, which: str = "test"):
        ids = getattr(self.split, which)
        return self.select(ids, "degraded"), self.select(ids, "clean")

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(kvtext.dumps(self._index()).encode())
        h.update(np.asarray(self.clean, dtype="<f8").tobytes())
        h.update(np.asarray(self.degraded, dtype="<f8").tobytes())
        return h.hexdigest()

    def _index(self) -> dict:
        return {
            "format_version": 1,
            "seed": self.seed,
            "config": self.cfg.to_dict(),
            "split": self.split.to_dict(),
            "subjects": [
                {"id": s.subject_id, "label": s.label, "slices": s.slices,
                 "ellipses": [list(map(float, e)) for e in s.ellipses]}
                for s in self.subjects
            ],
        }

    def save(self, root) -> Path:
        root = Path(root)
        (root / "slices").mkdir(parents=True, exist_ok=True)
        kvtext.dump(self._index(), root / "index.kv")
        for i in range(self.clean.shape[0]):
            stem = f"s{self.subject_idx[i]:04d}_{self.slice_idx[i]:02d}"
            write_raw(root / "slices" / f"{stem}_clean.bin", self.clean[i])
            write_raw(root / "slices" / f"{stem}_degraded.bin", self.degraded[i])
        return root

    @classmethod
    def load(cls, root) -> "PhantomDataset":
        root = Path(root)
        index_path = root / "index.kv"
        if not index_path.exists():
            raise DataError(f"no dataset index at {index_path}")
        idx = kvtext.load(index_path)
        cfg = DatasetConfig.from_dict(idx["config"])
        subjects, clean, degraded, sub_idx, sl_idx, labels = [], [], [], [], [], []
        for rec in idx["subjects"]:
            subj = Subject(rec["id"], rec["label"], [tuple(e) for e in rec["ellipses"]], rec["slices"])
            subjects.append(subj)
            for k in subj.slices:
                stem = root / "slices" / f"s{subj.subject_id:04d}_{k:02d}"
                try:
                    clean.append(read_raw(f"{stem}_clean.bin"))
                    degraded.append(read_raw(f"{stem}_degraded.bin"))
                except FileNotFoundError as exc:
                    raise DataError(f"missing slice file: {exc.filename}") from None
                sub_idx.append(subj.subject_id)
                sl_idx.append(k)
                labels.append(subj.label)
        return cls(cfg, idx["seed"], subjects, np.array(clean), np.array(degraded),
                   np.array(sub_idx, dtype=np.int64), np.array(sl_idx, dtype=np.int64),
                   np.array(labels, dtype=np.int64), DatasetSplit.from_dict(idx["split"]))


def write_raw(path, arr) -> None:
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim != 2:
        raise DomainError("raw slice files hold rank-2 arrays")
    Path(path).write_bytes(struct.pack("<QQ", *arr.shape) + arr.tobytes(order="C"))


def read_raw(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    h, w = struct.unpack("<QQ", raw[:16])
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != h * w:
        raise DataError(f"{path}: header says {h}x{w}, found {data.size} values")
    return data.reshape(h, w).astype(np.float64)


def generate_dataset(cfg: DatasetConfig = DatasetConfig(), seed: int = 0) -> PhantomDataset:
    """Deterministic phantom dataset with its subject-level split."""
    streak = streak_field(cfg, seed)
    subjects, clean, degraded, sub_idx, sl_idx, labels = [], [], [], [], [], []
    for sid in range(cfg.n_subjects):
        rng = np.random.default_rng([seed, sid, 0])
        label = sid % cfg.n_classes
        for attempt in range(cfg.max_retries + 1):
            base = _subject_ellipses(label, rng)
            imgs = [render(_slice_ellipses(base, cfg, rng), cfg.image_size)
                    for _ in range(cfg.slices_per_subject)]
            if all(_foreground_ok(im, cfg) for im in imgs):
                break
        else:
            raise GenerationError(
                f"subject {sid}: foreground outside {cfg.fg_range} after {cfg.max_retries} retries"
            )
        subjects.append(Subject(sid, label, base, list(range(cfg.slices_per_subject))))
        for k, im in enumerate(imgs):
            clean.append(im)
            degraded.append(degrade(im, cfg, streak, slice_noise_rng(seed, sid, k)))
            sub_idx.append(sid)
            sl_idx.append(k)
            labels.append(label)
    split = split_subjects([s.subject_id for s in subjects], cfg.split_ratios, seed)
    return PhantomDataset(cfg, seed, subjects, np.array(clean), np.array(degraded),
                          np.array(sub_idx, dtype=np.int64), np.array(sl_idx, dtype=np.int64),
                          np.array(labels, dtype=np.int64), split)


def split_subjects(subject_ids, ratios=(7, 1, 2), seed: int = 0) -> DatasetSplit:
    """Shuffle subjects, cut train/val/test by ``ratios``, halve train into CBCT and CT groups."""
    ids = list(subject_ids)
    if len(ids) < 10:
        raise DomainError(f"need at least 10 subjects to split, got {len(ids)}")
    r = np.asarray(ratios, dtype=float)
    n = len(ids)
    n_train = int(round(n * r[0] / r.sum()))
    n_val = int(round(n * r[1] / r.sum()))
    perm = np.random.default_rng([seed, 0x5B17]).permutation(n)
    order = [ids[i] for i in perm]
    train, val, test = order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]
    half = (len(train) + 1) // 2
    return DatasetSplit(tuple(sorted(train[:half])), tuple(sorted(train[half:])),
                        tuple(sorted(val)), tuple(sorted(test)))


# --------------------------------------------------------------------------
# 2-D point-cloud tier
# --------------------------------------------------------------------------

MOONS_MEAN = np.array([0.5, 0.25])


@dataclass(frozen=True)
class PointCloudConfig:
    n_source: int = 512
    n_target: int = 512
    noise: float = 0.05
    offset: tuple = (2.0, 0.0)
    rotation_deg: float = 0.0


def _two_moons(n: int, noise: float, rng):
    labels = rng.integers(0, 2, size=n)
    s = rng.uniform(0.0, np.pi, size=n)
    upper = np.stack([np.cos(s), np.sin(s)], axis=1)
    lower = np.stack([1.0 - np.cos(s), 0.5 - np.sin(s)], axis=1)
    pts = np.where(labels[:, None] == 0, upper, lower) - MOONS_MEAN
    return pts + rng.normal(0.0, noise, size=pts.shape), labels


def generate_pointcloud_task(cfg: PointCloudConfig = PointCloudConfig(), seed: int = 0):
    """Centred two-moons source and a rotated+shifted two-moons target.

    Returns ``((source, source_labels), (target, target_labels))``.
    """
    if cfg.n_source < 1 or cfg.n_target < 1 or cfg.noise < 0:
        raise DomainError("point counts must be positive and noise non-negative")
    rng = np.random.default_rng([seed, 0x2D])
    src, src_lab = _two_moons(cfg.n_source, cfg.noise, rng)
    tgt, tgt_lab = _two_moons(cfg.n_target, cfg.noise, rng)
    th = np.deg2rad(cfg.rotation_deg)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    tgt = tgt @ rot.T + np.asarray(cfg.offset, dtype=float)
    return (src, src_lab), (tgt, tgt_lab)
