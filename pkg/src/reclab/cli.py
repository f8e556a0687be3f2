"""Command line entry point: ``reclab {generate,train,evaluate,compare,export-embeddings}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, with_overrides
from .dataset import dump_trips, save_trips
from .errors import ConfigError, HashMismatch, RecLabError
from .evaluation import evaluate, export_embedding_plot, leaderboard
from .experiment import (ALL_MODELS, PreparedData, fit_baselines, load_model_checkpoint, prepare_data,
                         run_comparison, save_baselines, save_model_checkpoint, train_variant, user_profiles)
from . import features as fx

log = logging.getLogger("reclab")

EXIT_CODES = {ConfigError: 2, HashMismatch: 3}


def output_dir(cfg: RunConfig, out: str | None) -> Path:
    if out:
        root = Path(out)
    elif os.environ.get("REC_LAB_OUT"):
        root = Path(os.environ["REC_LAB_OUT"])
    else:
        root = Path(cfg.output.directory)
    root.mkdir(parents=True, exist_ok=True)
    return root


def data_hash(data: PreparedData) -> str:
    return hashlib.sha256(dump_trips(data.full).encode()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, started: float, inputs_hash: str, **extra) -> Path:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seed": cfg.training.seed,
        "input_hash": inputs_hash,
        "wall_seconds": round(time.time() - started, 3),
        "version": __version__,
        **extra,
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_generate(cfg: RunConfig, out: Path) -> dict:
    data = prepare_data(cfg)
    ddir = out / "data"
    ddir.mkdir(exist_ok=True)
    save_trips(data.full, ddir / "trips.csv", cfg.data.delimiter)
    save_trips(data.train, ddir / "train.csv", cfg.data.delimiter)
    save_trips(data.test, ddir / "test.csv", cfg.data.delimiter)
    return {"input_hash": data_hash(data), "n_trips": len(data.full), "n_train": len(data.train),
            "n_test": len(data.test)}


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    data = prepare_data(cfg)
    dh = data_hash(data)
    run = train_variant(cfg, data, out_dir=out)
    save_model_checkpoint(out / cfg.output.checkpoint_file, run, cfg, dh)
    return {"input_hash": dh, "variant": cfg.model.variant, "best_epoch": run.trained.best_epoch,
            "best_validation_acc4": run.trained.best_validation_acc4}


def cmd_evaluate(cfg: RunConfig, out: Path, checkpoint: str | None) -> dict:
    data = prepare_data(cfg)
    ckpt = Path(checkpoint) if checkpoint else out / cfg.output.checkpoint_file
    rec = load_model_checkpoint(ckpt, data)
    report = evaluate(rec, data.test, 4, rec.name, cfg.digest(), cfg.training.seed)
    report.write(out / cfg.output.report_file, out / cfg.output.summary_file)
    return {"input_hash": data_hash(data), "checkpoint": str(ckpt), "acc_at_4": report.acc_at_4}


def cmd_compare(cfg: RunConfig, out: Path) -> dict:
    data = prepare_data(cfg)
    reports, runs = run_comparison(cfg, ALL_MODELS, data, out_dir=out)
    rdir = out / "reports"
    rdir.mkdir(exist_ok=True)
    for r in reports:
        r.write(rdir / f"{r.model_name}.jsonl", rdir / f"{r.model_name}.summary.json")
    for name, run in runs.items():
        save_model_checkpoint(out / name / cfg.output.checkpoint_file, run, cfg, data_hash(data))
    pop, sim = fit_baselines(cfg, data)
    save_baselines(out / "baselines.ckpt", pop, sim, data.vocab.digest())
    text, records = leaderboard(reports)
    (out / cfg.output.leaderboard_file).write_text(text)
    with open(out / cfg.output.leaderboard_records, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(text, end="")
    return {"input_hash": data_hash(data), "leaderboard": records}


def cmd_export_embeddings(cfg: RunConfig, out: Path, checkpoint: str | None, max_users: int = 2000) -> dict:
    data = prepare_data(cfg)
    ckpt = Path(checkpoint) if checkpoint else out / cfg.output.checkpoint_file
    rec = load_model_checkpoint(ckpt, data)
    p = rec.pipeline
    if p.encoder is None:
        raise ConfigError(f"variant {p.variant.name!r} has no user encoder; train narm_v2")
    users, rows, months = user_profiles(data.train.trips, max_users, p.extended)
    vectors = p.encoder.encode(fx.apply_normalizer(p.user_norm, rows))
    plot = out / cfg.output.embedding_plot
    export_embedding_plot(vectors, months, plot, seed=cfg.training.seed)
    return {"input_hash": data_hash(data), "n_users": len(users), "plot": str(plot)}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (YAML/JSON) or a run manifest")
    common.add_argument("--out", help="output directory (overrides REC_LAB_OUT and the config)")
    common.add_argument("--seed", type=int, help="training/augmentation seed override")
    common.add_argument("--variant", help="narm | narm_v1 | narm_v2")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="reclab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the dataset and its splits")
    sub.add_parser("train", parents=[common], help="train one variant")
    ev = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    ev.add_argument("--checkpoint")
    sub.add_parser("compare", parents=[common], help="leaderboard over all models")
    ex = sub.add_parser("export-embeddings", parents=[common], help="t-SNE plot of user embeddings")
    ex.add_argument("--checkpoint")
    ex.add_argument("--max-users", type=int, default=2000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = time.time()
    out = None
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.variant)
        out = output_dir(cfg, args.out)
        if args.command == "generate":
            info = cmd_generate(cfg, out)
        elif args.command == "train":
            info = cmd_train(cfg, out)
        elif args.command == "evaluate":
            info = cmd_evaluate(cfg, out, args.checkpoint)
        elif args.command == "compare":
            info = cmd_compare(cfg, out)
        else:
            info = cmd_export_embeddings(cfg, out, args.checkpoint, args.max_users)
        write_manifest(out, args.command, cfg, started, info.pop("input_hash", ""), result=info)
        return 0
    except (RecLabError, ValueError, OSError) as exc:
        record = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        if out is None and (args.out or os.environ.get("REC_LAB_OUT")):
            out = Path(args.out or os.environ["REC_LAB_OUT"])
            out.mkdir(parents=True, exist_ok=True)
        if out is not None:
            (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        return next((code for cls, code in EXIT_CODES.items() if isinstance(exc, cls)), 1)


if __name__ == "__main__":
    sys.exit(main())
