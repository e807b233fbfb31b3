"""Training loop: one pass over the source set per epoch, Algorithm-1 step order.

Per iteration:

1. take the next source (degraded) mini-batch of the epoch permutation
2. draw a target (clean) mini-batch uniformly with replacement
3. encode the target batch and enqueue it into the FIFO bank
4. build the coupling for the configured strategy (retrieval reads the bank
   only after step 3)
5. one ``t ~ U(0,1)`` per pair, mean squared velocity residual, Adam update
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coupling import couple_batchwise, couple_paired, couple_random, couple_retrieval
from ..data_synth import PhantomDataset
from ..encoder import FrozenEncoder
from ..errors import NumericError
from ..flow_engine import rf_loss_batch
from ..memory_bank import MemoryBank
from ..velocity_net import AdamState, TimeEmbedding, VelocityNet, adam_step, checkpoint_bytes
from .config import ExperimentConfig

log = logging.getLogger(__name__)

RUNLOG_COLUMNS = ("iteration", "epoch", "loss", "mean_similarity", "bank_occupancy",
                  "enqueue_seq", "retrieve_seq")
WARMUP_ITERATIONS = 50


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])

    def similarities(self) -> np.ndarray:
        return np.array([r["mean_similarity"] for r in self.records])

    def mean_similarity(self, first: int | None = None) -> float:
        """Mean coupling similarity, optionally over the first ``first`` iterations only."""
        sims = self.similarities()[:first]
        sims = sims[~np.isnan(sims)]
        return float(sims.mean()) if sims.size else float("nan")

    def warmup_similarity(self) -> float:
        """Bank warm-up diagnostic: mean similarity over the first iterations."""
        return self.mean_similarity(WARMUP_ITERATIONS)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUNLOG_COLUMNS)
            for r in self.records:
                w.writerow([r[c] if isinstance(r[c], int) else repr(float(r[c]))
                            for c in RUNLOG_COLUMNS])

    def write_timing(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iteration", "wall_time_s"))
            for i, t in enumerate(self.wall_times):
                w.writerow((i, f"{t:.6f}"))


@dataclass
class TrainResult:
    net: VelocityNet
    runlog: RunLog
    encoder: FrozenEncoder
    header: dict
    checkpoint: bytes


def _child_seeds(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_encoder(cfg: ExperimentConfig, ds: PhantomDataset) -> FrozenEncoder:
    return FrozenEncoder(ds.image_shape, dim=cfg.encoder_dim, seed=cfg.encoder_seed)


def init_net(cfg: ExperimentConfig, sample_dim: int) -> VelocityNet:
    init_seed = int(np.random.SeedSequence([cfg.seed, 1]).generate_state(1)[0])
    return VelocityNet.init(sample_dim, cfg.hidden, TimeEmbedding(cfg.time_embedding_dim),
                            seed=init_seed)


def train(cfg: ExperimentConfig, ds: PhantomDataset | None = None, on_step=None) -> TrainResult:
    """Train a velocity field for ``cfg``; ``ds`` defaults to loading ``cfg.dataset``.

    ``on_step(iteration, coupling, bank)`` is called after each coupling is formed.
    """
    ds = ds if ds is not None else PhantomDataset.load(cfg.dataset)
    cbct = ds.train_cbct()
    ct = ds.train_ct()
    paired_ct = ds.select(ds.split.train_cbct, "clean") if cfg.strategy == "paired" else None
    sample_dim = cbct.images.shape[1]

    rng_order, rng_ct, rng_t, rng_pair = _child_seeds(cfg.seed, 4)
    net = init_net(cfg, sample_dim)
    opt = AdamState.for_params(net.params(), lr=cfg.lr)
    encoder = make_encoder(cfg, ds)
    bank = MemoryBank(cfg.bank_capacity or 0, cfg.encoder_dim, sample_dim)
    cbct_group, ct_group = ds.split.train_cbct, ds.split.train_ct

    runlog = RunLog()
    seq = 0
    it = 0
    n = len(cbct)
    for epoch in range(cfg.epochs):
        order = rng_order.permutation(n)
        for start in range(0, n, cfg.batch_size):
            t0 = time.perf_counter()
            idx = order[start:start + cfg.batch_size]
            src = cbct.take(idx)
            enqueue_seq = retrieve_seq = -1
            if cfg.strategy == "paired":
                coupling = couple_paired(src, paired_ct.take(idx), encoder)
            else:
                b_ct = len(idx) if cfg.strategy == "batchwise" else cfg.ct_batch_size
                tgt = ct.take(rng_ct.integers(0, len(ct), size=b_ct))
                bank.enqueue(encoder.encode_batch(tgt.images), tgt.images, tgt.subjects)
                enqueue_seq, seq = seq, seq + 1
                if cfg.strategy == "random":
                    coupling = couple_random(src, tgt, rng_pair, encoder)
                elif cfg.strategy == "batchwise":
                    coupling = couple_batchwise(src, tgt, encoder)
                else:
                    coupling = couple_retrieval(src, bank, encoder, fallback_ct=tgt, rng=rng_pair)
                retrieve_seq, seq = seq, seq + 1
                coupling.assert_unpaired(cbct_group, ct_group)
            if on_step is not None:
                on_step(it, coupling, bank)

            loss, grads, _ = rf_loss_batch(net, coupling, rng_t)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at iteration {it}")
            adam_step(net.params(), grads, opt)
            runlog.records.append({
                "iteration": it, "epoch": epoch, "loss": loss,
                "mean_similarity": coupling.mean_similarity,
                "bank_occupancy": len(bank),
                "enqueue_seq": enqueue_seq, "retrieve_seq": retrieve_seq,
            })
            runlog.wall_times.append(time.perf_counter() - t0)
            it += 1
            if it == WARMUP_ITERATIONS:
                log.info("mean coupling similarity over the first %d iterations: %.4f",
                         it, runlog.warmup_similarity())
        log.info("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs,
                 np.mean([r["loss"] for r in runlog.records[-max(1, n // cfg.batch_size):]]))

    header = {
        "seed": cfg.seed,
        "step": opt.step,
        "strategy": cfg.strategy,
        "bank_capacity": cfg.bank_capacity,
        "encoder_seed": cfg.encoder_seed,
        "encoder_dim": cfg.encoder_dim,
        "image_shape": list(ds.image_shape),
        "dataset_hash": ds.content_hash(),
    }
    return TrainResult(net, runlog, encoder, header, checkpoint_bytes(net, header))


def save_training(result: TrainResult, cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.bin").write_bytes(result.checkpoint)
    result.runlog.write_csv(out / "runlog.csv")
    result.runlog.write_timing(out / "timing.csv")
    cfg.save(out / "config.kv")
    return out
