"""Command-line entry point.

Commands: train, pathwise-train, eval-subnets, count, curves.  Exit codes:
0 success, 2 usage/config errors, 3 data-format errors, 4 numerical
aborts.  Commands write only under --out; rerunning with the same seed and
inputs reproduces history CSVs and checkpoints byte for byte.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arch import Network, count_parameters, count_parameters_by_section, depth
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    config_echo,
    parse_config,
    parse_config_text,
    to_network_spec,
    to_train_config,
)
from .data import grating_dataset, load_cifar_dir, synthetic_dataset
from .errors import ConfigError, FormatError, NumericalError, UsageError
from .rng import stream_rng
from .trainer import (
    InitConfig,
    estimate_training_memory,
    evaluate_error,
    init_params,
    train,
    write_history_csv,
)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="crescendo",
        description="Train and inspect multi-branch Crescendo-block networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--data-dir", default=None,
                       help="directory with binary record files")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--epochs", type=int, default=None,
                       help="override config epochs")
        p.add_argument("--subset", type=int, default=None,
                       help="limit training images to the first N")
        return p

    add_train("train", "train a network per the config")
    add_train("pathwise-train", "train one path at a time, freezing the rest")

    p = sub.add_parser("eval-subnets", help="error rates of branch subsets")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--paths", action="append", default=[],
                   help='branch set like "1,3"; repeatable; the full set is '
                        "always included")
    p.add_argument("--subset", type=int, default=None,
                   help="limit test images to the first N")

    p = sub.add_parser("count", help="depth, parameter and memory accounting")
    p.add_argument("--config", required=True)

    p = sub.add_parser("curves", help="merge history CSVs into long format")
    p.add_argument("inputs", nargs="+", help="history CSV files")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--labels", default=None,
                   help="comma-separated run labels (default: file stems)")
    return parser


def _apply_overrides(cfg, args, pathwise=None):
    from dataclasses import replace
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if getattr(args, "subset", None):
        updates["train_subset"] = args.subset
    if pathwise is not None:
        updates["pathwise"] = pathwise
    return replace(cfg, **updates) if updates else cfg


def _load_datasets(cfg, data_dir, need_train=True):
    if cfg.dataset in ("cifar10", "cifar100"):
        classes = 10 if cfg.dataset == "cifar10" else 100
        if classes != cfg.classes:
            raise ConfigError(
                f"dataset {cfg.dataset} has {classes} classes, config says "
                f"{cfg.classes}", key="classes")
        if data_dir is None:
            raise UsageError(f"--data-dir is required for dataset {cfg.dataset}")
        train_ds = load_cifar_dir(data_dir, "train", classes) if need_train else None
        test_ds = load_cifar_dir(data_dir, "test", classes)
    elif cfg.dataset in ("synthetic", "gratings"):
        maker = synthetic_dataset if cfg.dataset == "synthetic" else grating_dataset
        train_n = cfg.train_subset or 1024
        test_n = cfg.eval_subset or 256
        train_ds = maker(train_n, cfg.classes, cfg.seed, split="train") \
            if need_train else None
        test_ds = maker(test_n, cfg.classes, cfg.seed + 1, split="test")
    else:
        raise ConfigError("unknown dataset", key="dataset")
    if train_ds is not None and cfg.train_subset:
        train_ds = train_ds.subset(cfg.train_subset)
    if cfg.eval_subset:
        test_ds = test_ds.subset(cfg.eval_subset)
    return train_ds, test_ds


def _write_manifest(out_dir, cfg, artifacts):
    manifest = {
        "build": f"crescendonet {__version__}",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seed": cfg.seed,
        "output_dir": str(out_dir),
        "config": config_echo(cfg),
        "artifacts": artifacts,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _print_progress(rec):
    evals = " ".join(f"{k} {v:.2f}%" for k, v in rec.eval_errors.items())
    print(f"epoch {rec.epoch}: lr {rec.lr:g} loss {rec.train_loss:.4f} "
          f"train_err {rec.train_error_pct:.2f}% {evals} "
          f"({rec.wall_seconds:.1f}s)", flush=True)


def cmd_train(args, pathwise):
    cfg = _apply_overrides(parse_config(args.config), args, pathwise=pathwise)
    train_ds, eval_ds = _load_datasets(cfg, args.data_dir)
    net = Network(to_network_spec(cfg))
    store = init_params(net, InitConfig(), stream_rng(cfg.seed, "init"))
    history = train(net, store, train_ds, eval_ds, to_train_config(cfg),
                    progress=_print_progress)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.ckpt", store, config_echo(cfg))
    write_history_csv(history, out_dir / "history.csv")
    _write_manifest(out_dir, cfg, ["checkpoint.ckpt", "history.csv"])
    last = history[-1]
    line = (f"epoch {last.epoch}: train_loss {last.train_loss:.4f} "
            f"train_error {last.train_error_pct:.2f}%")
    if "full" in last.eval_errors:
        line += f" eval_error {last.eval_errors['full']:.2f}%"
    print(line)
    return 0


def _parse_path_flag(text):
    try:
        parts = tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"invalid path set {text!r}: {exc}") from exc
    if not parts:
        raise UsageError("empty path set")
    return parts


def cmd_eval_subnets(args):
    store, echo = load_checkpoint(args.checkpoint)
    cfg = parse_config_text(echo, source=f"{args.checkpoint}:config")
    if args.subset:
        from dataclasses import replace
        cfg = replace(cfg, eval_subset=args.subset)
    net = Network(to_network_spec(cfg))
    _, test_ds = _load_datasets(cfg, args.data_dir, need_train=False)
    full = tuple(range(1, cfg.scale + 1))
    requested = [_parse_path_flag(t) for t in args.paths]
    path_sets = [full] + [p for p in requested if tuple(sorted(set(p))) != full]
    rows = []
    for paths in path_sets:
        error = evaluate_error(net, store, test_ds, paths=paths)
        rows.append(("{" + ",".join(str(p) for p in sorted(set(paths))) + "}",
                     depth(net.spec, paths), error))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "subnets.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["P", "depth", "error_pct"])
        for label, d, error in rows:
            writer.writerow([label, d, repr(float(error))])
    print(f"{'P':<16} {'depth':>5} {'error%':>8}")
    for label, d, error in rows:
        print(f"{label:<16} {d:>5} {error:>8.2f}")
    return 0


def cmd_count(args):
    cfg = parse_config(args.config)
    spec = to_network_spec(cfg)
    total = count_parameters(spec)
    print(f"depth: {depth(spec)}")
    for section, count in count_parameters_by_section(spec).items():
        print(f"params[{section}]: {count:,}")
    print(f"params[total]: {total:,}")
    print(f"memory[whole]: {estimate_training_memory(spec, 'whole'):.4f}")
    for k in range(1, cfg.scale + 1):
        ratio = estimate_training_memory(spec, "path", k)
        print(f"memory[path {k}]: {ratio:.4f}")
    print(f"memory[amortized]: {estimate_training_memory(spec, 'amortized'):.4f}")
    return 0


def cmd_curves(args):
    from .trainer import read_history_csv
    labels = args.labels.split(",") if args.labels else \
        [Path(p).stem for p in args.inputs]
    if len(labels) != len(args.inputs):
        raise UsageError(f"{len(args.inputs)} inputs but {len(labels)} labels")
    parsed = []
    reference = None
    for path in args.inputs:
        header, rows = read_history_csv(path)
        if reference is None:
            reference = header
        elif header != reference:
            extra = next((c for c in header if c not in reference),
                         next(c for c in reference if c not in header))
            raise UsageError(f"{path}: schema mismatch on column {extra!r}")
        parsed.append(rows)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metrics = [c for c in reference if c != "epoch"]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "epoch", "metric", "value"])
        for label, rows in zip(labels, parsed):
            for row in rows:
                for metric in metrics:
                    if row[metric] != "":
                        writer.writerow([label, row["epoch"], metric, row[metric]])
    print(f"wrote {out_path}")
    return 0


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        if args.command == "train":
            return cmd_train(args, pathwise=None)
        if args.command == "pathwise-train":
            return cmd_train(args, pathwise=True)
        if args.command == "eval-subnets":
            return cmd_eval_subnets(args)
        if args.command == "count":
            return cmd_count(args)
        if args.command == "curves":
            return cmd_curves(args)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4
    return 0


def entry():
    sys.exit(main())
