"""Command-line entry point: ``clad {synth,train,eval,sweep,export-embeddings}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from clad import checkpoint as ckpt
from clad import pipeline
from clad.config import RunConfig, coerce, resolve
from clad.data import load_csv, synth_blobs, write_csv
from clad.errors import CladError, ConfigError
from clad.inference import OOD_SCORES, PROXIES

logger = logging.getLogger("clad")

# flag name -> RunConfig key
RUN_FLAGS = {
    "mode": "mode",
    "loss": "loss",
    "label-column": "label_column",
    "benign-label": "benign_label",
    "zero-day": "zero_day",
    "manifest": "manifest",
    "train-fraction": "train_fraction",
    "split-seed": "split_seed",
    "clamp": "clamp",
    "epochs": "epochs",
    "warmup-epochs": "warmup_epochs",
    "lr": "base_lr",
    "weight-decay": "weight_decay",
    "batch-size": "batch_size",
    "seed": "seed",
    "d-model": "d_model",
    "depth": "depth",
    "f-o": "f_o",
    "dropout": "dropout",
    "margin": "margin",
    "squared": "squared",
    "alpha": "alpha",
    "temperature": "temperature",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="flow CSV (header row, one label column)")
    p.add_argument("--config", help="flat 'key = value' config file; flags override it")
    for flag, key in RUN_FLAGS.items():
        p.add_argument(f"--{flag}", dest=key, default=None, metavar=key.upper())
    p.add_argument("--holdout-validation", dest="holdout_validation", action="store_const", const="true", default=None,
                   help="train on 80%% of the train split, keeping 20%% for validation")


def _run_config(args) -> RunConfig:
    overrides = {"data": args.data}
    for key in [*RUN_FLAGS.values(), "holdout_validation"]:
        raw = getattr(args, key, None)
        if raw is not None:
            overrides[key] = coerce(key, raw)
    return resolve(args.config, overrides)


def cmd_synth(args) -> None:
    d = synth_blobs(args.classes, args.per_class, args.features, args.separation, args.zero_day_count, args.seed)
    out = Path(args.out)
    write_csv(d, out)
    manifest = {
        "zero_day_classes": d.metadata["zero_day_classes"],
        "class_names": list(d.class_names),
        "generator": d.metadata["generator"],
    }
    Path(args.manifest or f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d rows to %s", len(d), out)


def cmd_train(args) -> None:
    cfg = _run_config(args)
    log_path = Path(args.log or f"{args.out}.log.jsonl")
    with log_path.open("w", encoding="utf-8", newline="\n") as fh:

        def on_epoch(rec):
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

        ck, log = pipeline.run_training(cfg, on_epoch=on_epoch)
    ckpt.save(ck, args.out)
    last = log.records[-1]["loss_mean"] if log.records else float("nan")
    logger.info("checkpoint %s (%d heads, final loss %.6g)", args.out, ck.params.config.n_heads, last)


def _threshold_args(args) -> tuple[float | None, float | None]:
    if args.tau is not None and args.target_fpr is not None:
        raise ConfigError("--tau and --target-fpr are mutually exclusive")
    return args.tau, args.target_fpr


def cmd_eval(args) -> None:
    ck = ckpt.load(args.checkpoint)
    cfg = RunConfig.from_dict(ck.run_config)
    d = load_csv(args.data, cfg.label_column, cfg.benign_label)
    reference = load_csv(args.reference, cfg.label_column, cfg.benign_label) if args.reference else None
    tau, target_fpr = _threshold_args(args)
    zero_day = [s.strip() for s in args.zero_day.split(",") if s.strip()] if args.zero_day is not None else None
    res = pipeline.run_eval(
        ck, d, args.split, args.proxy, args.ood_score, tau, target_fpr, zero_day, reference,
        eval_config={"data": args.data, "checkpoint": args.checkpoint},
    )
    print(f"scoring wall-clock: {res.report.wall_ms:.1f} ms", file=sys.stderr)
    if not args.timing:
        res.report.wall_ms = None
    text = res.report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.csv_out:
        flat = res.report.flat()
        pipeline.write_table(args.csv_out, list(flat), [list(flat.values())])
    if args.scores_out:
        pipeline.write_table(args.scores_out, res.score_header, res.score_rows)


def cmd_sweep(args) -> None:
    cfg = _run_config(args)
    if args.param not in ("margin", "alpha"):
        raise ConfigError("--param must be margin or alpha")
    if args.values:
        values = [float(v) for v in args.values.split(",")]
    elif None not in (args.start, args.stop, args.step):
        values = pipeline.sweep_values(args.start, args.stop, args.step)
    else:
        raise ConfigError("give --values or all of --from/--to/--step")
    for v in values:
        RunConfig.from_dict({**cfg.to_dict(), args.param: v}).validate()
    d = pipeline.load_dataset(cfg)
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(lambda v: pipeline.sweep_point(cfg, args.param, v, d), values))
    header = list(rows[0])
    pipeline.write_table(args.out, header, [[r[k] for k in header] for r in rows])
    meta = {"config": cfg.to_dict(), "param": args.param, "values": values}
    Path(f"{args.out}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_export(args) -> None:
    ck = ckpt.load(args.checkpoint)
    cfg = RunConfig.from_dict(ck.run_config)
    d = load_csv(args.data, cfg.label_column, cfg.benign_label)
    header, rows = pipeline.export_embeddings(ck, d, args.split)
    pipeline.write_table(args.out, header, rows)
    meta = {"config": ck.run_config, "checkpoint": args.checkpoint, "data": args.data, "split": args.split}
    Path(f"{args.out}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic blob dataset CSV plus manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--zero-day-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a CLAD or CLOSR model and write a checkpoint")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="epoch log path (default: <out>.log.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on flow data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("test", "val", "train", "all"), default="test",
                   help="rows to evaluate, re-derived from the checkpoint's split settings")
    p.add_argument("--zero-day", help="comma-separated unknown classes (default: as trained)")
    p.add_argument("--reference", help="CSV to fit non-centroid proxies and thresholds on")
    p.add_argument("--proxy", choices=PROXIES, default="centroid")
    p.add_argument("--ood-score", choices=OOD_SCORES, default="weighted_gaussian")
    p.add_argument("--tau", type=float)
    p.add_argument("--target-fpr", type=float)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--csv-out", help="also write the report as one flat CSV row")
    p.add_argument("--scores-out", help="per-row score dump CSV")
    p.add_argument("--timing", action="store_true", help="include scoring wall-clock in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train+validate over a grid of margin or alpha values")
    _add_run_flags(p)
    p.add_argument("--param", required=True, choices=("margin", "alpha"))
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--values", help="comma-separated explicit values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-embeddings", help="dump embeddings and centroid distances as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("test", "val", "train", "all"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CladError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
