"""Experiment configuration record and its key-value file form."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .. import kvtext
from ..errors import ConfigError

SCHEMA_VERSION = 1
STRATEGIES = ("random", "batchwise", "retrieval", "paired")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    strategy: str = "retrieval"
    bank_capacity: int | None = 256  # None only for the paired reference
    batch_size: int = 4
    ct_batch_size: int = 4
    lr: float = 2e-4
    epochs: int = 30
    euler_steps: int = 10
    dataset: str = "data/phantom"
    encoder_seed: int = 0
    encoder_dim: int = 64
    hidden: tuple = (256, 256)
    time_embedding_dim: int = 32
    out_dir: str = "runs/default"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.validate()

    def validate(self) -> None:
        s, k, b = self.strategy, self.bank_capacity, self.batch_size
        if s not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {s!r}")
        if b < 1 or self.ct_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.lr <= 0 or self.epochs < 0 or self.euler_steps < 1:
            raise ConfigError("need lr > 0, epochs >= 0, euler_steps >= 1")
        if self.encoder_dim < 1 or self.time_embedding_dim < 2 or self.time_embedding_dim % 2:
            raise ConfigError("encoder_dim >= 1 and an even time_embedding_dim are required")
        if s == "paired":
            if k is not None:
                raise ConfigError("paired runs have no memory bank; bank_capacity must be null")
            return
        if k is None or k < 0:
            raise ConfigError(f"{s} needs a bank_capacity >= 0")
        # Table-2 convention: K=0 is random coupling, K=B is batch-wise matching
        if (s == "random") != (k == 0):
            raise ConfigError(f"strategy=random iff bank_capacity=0 (got {s}, K={k})")
        if (s == "batchwise") != (k == b):
            raise ConfigError(f"strategy=batchwise iff bank_capacity=batch_size (got {s}, K={k}, B={b})")
        if s == "batchwise" and self.ct_batch_size != b:
            raise ConfigError("batchwise matching needs ct_batch_size == batch_size")

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        for k, v in asdict(self).items():
            d[k] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def save(self, path) -> None:
        kvtext.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(kvtext.load(path))
        except (OSError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"cannot read config {path}: {exc}") from None


def default_capacity(strategy: str, batch_size: int = 4, retrieval_k: int = 256):
    return {"random": 0, "batchwise": batch_size, "retrieval": retrieval_k, "paired": None}[strategy]
