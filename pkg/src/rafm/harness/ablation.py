"""Full runs (train + held-out evaluation) and the coupling-strategy sweep."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import kvtext
from ..data_synth import PhantomDataset
from ..errors import RAFMError
from ..metrics import write_report
from .config import ExperimentConfig
from .evaluation import evaluate_split, save_translation
from .training import save_training, train

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("strategy", "K", "seed", "mae", "mae_hu", "ssim", "psnr", "swd", "struct_dice",
                 "mean_similarity", "dataset_hash", "status")
METRIC_KEYS = ("mae", "mae_hu", "ssim", "psnr", "swd", "struct_dice", "mean_similarity")


def run_experiment(cfg: ExperimentConfig, ds: PhantomDataset | None = None, write: bool = True) -> dict:
    """Train, translate the test split, evaluate; returns the summary record."""
    ds = ds if ds is not None else PhantomDataset.load(cfg.dataset)
    result = train(cfg, ds)
    tr, report = evaluate_split(result.net, ds, "test", cfg.euler_steps)
    summary = {
        "strategy": cfg.strategy,
        "K": cfg.bank_capacity,
        "seed": cfg.seed,
        **{k: v for k, v in report.summary().items() if not k.endswith("_note")},
        "mean_similarity": result.runlog.mean_similarity(),
        "warmup_mean_similarity": result.runlog.warmup_similarity(),
        "final_loss": float(result.runlog.losses()[-1]) if len(result.runlog) else None,
        "iterations": len(result.runlog),
        "dataset_hash": result.header["dataset_hash"],
    }
    if write:
        out = save_training(result, cfg, cfg.out_dir)
        save_translation(tr, out)
        write_report(report, out)
        kvtext.dump(summary, out / "summary.kv")
    return summary


def sweep_configs(base: ExperimentConfig, k_list, seeds) -> list:
    """random (K=0), batchwise (K=B), retrieval for each K in ``k_list``, paired; per seed."""
    b = base.batch_size
    members = [("random", 0), ("batchwise", b)]
    members += [("retrieval", int(k)) for k in k_list if int(k) not in (0, b)]
    members += [("paired", None)]
    out_root = Path(base.out_dir)
    cfgs = []
    for seed in seeds:
        for strategy, k in members:
            tag = f"{strategy}_K{'-' if k is None else k}_seed{seed}"
            cfgs.append(base.replace(strategy=strategy, bank_capacity=k, seed=seed,
                                     ct_batch_size=b if strategy == "batchwise" else base.ct_batch_size,
                                     out_dir=str(out_root / tag)))
    return cfgs


def _member(args):
    cfg, ds, write = args
    try:
        return run_experiment(cfg, ds, write) | {"status": "ok"}
    except RAFMError as exc:
        log.error("run %s failed: %s", cfg.out_dir, exc)
        return {"strategy": cfg.strategy, "K": cfg.bank_capacity, "seed": cfg.seed,
                "dataset_hash": ds.content_hash(),
                "status": f"failed: {type(exc).__name__}: {exc}"}


def ablate(base: ExperimentConfig, k_list=(64, 256), seeds=(0,), ds: PhantomDataset | None = None,
           jobs: int = 1, write: bool = True) -> list:
    """Run the sweep; returns one row per member run and writes the comparison tables."""
    ds = ds if ds is not None else PhantomDataset.load(base.dataset)
    cfgs = sweep_configs(base, k_list, seeds)
    args = [(c, ds, write) for c in cfgs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_member, args))
    else:
        rows = [_member(a) for a in args]
    if write:
        out = Path(base.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table(rows, out / "ablation.csv")
        write_table(median_rows(rows), out / "ablation_median.csv")
    return rows


def median_rows(rows) -> list:
    """Median of each metric across seeds, one row per (strategy, K)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["strategy"], r["K"]), []).append(r)
    out = []
    for (strategy, k), members in groups.items():
        ok = [m for m in members if m.get("status") == "ok"]
        row = {"strategy": strategy, "K": k, "seed": "median",
               "status": "ok" if len(ok) == len(members) else f"{len(members) - len(ok)} failed"}
        for key in METRIC_KEYS:
            row[key] = float(np.median([m[key] for m in ok])) if ok else float("nan")
        hashes = {m.get("dataset_hash") for m in ok}
        row["dataset_hash"] = hashes.pop() if len(hashes) == 1 else "mixed"
        out.append(row)
    return out


def write_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            cells = []
            for c in TABLE_COLUMNS:
                v = r.get(c, "")
                if c == "K" and v is None:
                    v = "/"
                elif isinstance(v, float):
                    v = repr(v)
                cells.append(v)
            w.writerow(cells)
