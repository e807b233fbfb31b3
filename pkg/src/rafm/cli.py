"""Command-line entry point: ``rafm {generate-data,train,translate,evaluate,ablate}``.

Experiment flags mirror the ``ExperimentConfig`` field names (underscores
become hyphens).  Exit codes: 0 success, 1 config error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import kvtext
from .data_synth import DatasetConfig, PhantomDataset, generate_dataset
from .errors import ConfigError, DataError, DomainError, NumericError, RetrievalError
from .harness.ablation import ablate, median_rows, run_experiment
from .harness.config import ExperimentConfig, default_capacity
from .harness.evaluation import evaluate, load_translation, save_translation, translate
from .harness.training import save_training, train
from .metrics import write_report
from .velocity_net import load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("rafm")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file; explicit flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=("random", "batchwise", "retrieval", "paired"))
    p.add_argument("--bank-capacity", type=_capacity,
                   help="memory-bank size K (defaults per strategy; 'none' for paired)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--ct-batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--euler-steps", type=int)
    p.add_argument("--dataset")
    p.add_argument("--encoder-seed", type=int)
    p.add_argument("--encoder-dim", type=int)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--time-embedding-dim", type=int)
    p.add_argument("--out-dir")


def _capacity(text: str):
    if text.lower() in ("none", "null", "/"):
        return None
    return int(text)


def config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base.pop("schema_version", None)
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    # K follows the strategy unless given explicitly
    if args.bank_capacity is None and (not args.config or args.strategy or args.batch_size):
        strategy = base.get("strategy", ExperimentConfig.strategy)
        base["bank_capacity"] = default_capacity(strategy, base.get("batch_size", 4))
    return ExperimentConfig.from_dict(base)


def cmd_generate_data(args) -> int:
    cfg = DatasetConfig(
        n_subjects=args.n_subjects, slices_per_subject=args.slices_per_subject,
        image_size=args.image_size, bias=args.bias, streak_amplitude=args.streak_amplitude,
        noise_sigma=args.noise_sigma,
    )
    ds = generate_dataset(cfg, args.seed)
    ds.save(args.out)
    print(f"wrote {len(ds.subjects)} subjects ({ds.clean.shape[0]} slices) to {args.out}")
    print(f"dataset hash {ds.content_hash()}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    ds = PhantomDataset.load(cfg.dataset)
    result = train(cfg, ds)
    out = save_training(result, cfg, cfg.out_dir)
    losses = result.runlog.losses()
    if losses.size:
        print(f"{len(losses)} iterations, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    print(f"checkpoint written to {out / 'checkpoint.bin'}")
    return EXIT_OK


def cmd_translate(args) -> int:
    ds = PhantomDataset.load(args.dataset)
    net, header = load_checkpoint(args.checkpoint)
    if tuple(header.get("image_shape", ds.image_shape)) != ds.image_shape:
        raise ConfigError(f"checkpoint trained on {header['image_shape']} images, "
                          f"dataset has {list(ds.image_shape)}")
    src, _ = ds.eval_pair(args.split)
    tr = translate(net, src, args.euler_steps)
    out = save_translation(tr, args.out_dir)
    print(f"translated {src.images.shape[0]} slices into {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = PhantomDataset.load(args.dataset)
    tr = load_translation(args.synth_dir, ds, args.split)
    _, ref = ds.eval_pair(args.split)
    report = evaluate(tr, ref)
    write_report(report, args.out_dir)
    for k, v in report.summary().items():
        print(f"{k:>18s}  {v}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    summary = run_experiment(cfg)
    print(kvtext.dumps(summary), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    rows = ablate(cfg, args.k_list, args.seeds, jobs=args.jobs)
    print(f"{'strategy':10s} {'K':>5s} {'MAE':>8s} {'SSIM':>7s} {'PSNR':>7s} {'SWD':>8s} {'Dice':>7s}")
    for r in median_rows(rows):
        k = "/" if r["K"] is None else str(r["K"])
        print(f"{r['strategy']:10s} {k:>5s} {r['mae']:8.4f} {r['ssim']:7.4f} {r['psnr']:7.2f} "
              f"{r['swd']:8.4f} {r['struct_dice']:7.4f}")
    print(f"tables written to {Path(cfg.out_dir) / 'ablation.csv'} and ablation_median.csv")
    failed = [r for r in rows if r.get("status") != "ok"]
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rafm", description="Retrieval-coupled rectified flow on phantom slices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a phantom dataset with its unpaired split")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    d = DatasetConfig()
    p.add_argument("--n-subjects", type=int, default=d.n_subjects)
    p.add_argument("--slices-per-subject", type=int, default=d.slices_per_subject)
    p.add_argument("--image-size", type=int, default=d.image_size)
    p.add_argument("--bias", type=float, default=d.bias)
    p.add_argument("--streak-amplitude", type=float, default=d.streak_amplitude)
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train one velocity field")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="integrate a checkpoint over a held-out split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--euler-steps", type=int, default=10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score translated slices against clean references")
    p.add_argument("--synth-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="train + translate + evaluate in one go")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="coupling-strategy / bank-size sweep")
    _add_config_flags(p)
    p.add_argument("--k-list", type=int, nargs="*", default=[64, 256])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, RetrievalError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
