"""End-to-end train / evaluate / export flows shared by the CLI and the sweep."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from clad import checkpoint as ckpt
from clad.config import RunConfig
from clad.data import FlowDataset, SplitSpec, fit_scaler, load_csv, split_indices
from clad.errors import ConfigError, DataError
from clad.inference import (
    CentroidSet,
    binary_scores,
    compute_centroids,
    osr_scores_from_sims,
    predict_binary,
    predict_osr,
    softmax_rows,
    threshold_for_fpr,
)
from clad.metrics import (
    EvalReport,
    auroc,
    closed_set_report,
    fpr_at_recall,
    normalized_rank,
    open_set_metrics,
)
from clad.model import embed
from clad.optim import TrainingLog, default_head_classes, train

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.8


@dataclass
class Splits:
    """Row indices into the source dataset for each role."""

    fit: np.ndarray
    val: np.ndarray | None
    test: np.ndarray

    def rows(self, name: str, n: int) -> np.ndarray:
        if name == "all":
            return np.arange(n)
        if name == "test":
            return self.test
        if name == "val":
            if self.val is None:
                raise ConfigError("no validation split: the model was trained without --holdout-validation")
            return self.val
        if name == "train":
            return self.fit
        raise ConfigError(f"unknown split {name!r}")


def load_dataset(cfg: RunConfig) -> FlowDataset:
    if not cfg.data:
        raise ConfigError("no data path given (--data)")
    return load_csv(cfg.data, cfg.label_column, cfg.benign_label)


def zero_day_names(cfg: RunConfig) -> list[str]:
    names = list(cfg.zero_day)
    if cfg.manifest:
        path = Path(cfg.manifest)
        if not path.is_file():
            raise ConfigError(f"no such manifest: {path}")
        for n in json.loads(path.read_text(encoding="utf-8")).get("zero_day_classes", []):
            if n not in names:
                names.append(n)
    return sorted(names)


def make_splits(d: FlowDataset, cfg: RunConfig) -> Splits:
    seed = cfg.effective_split_seed
    train, test = split_indices(d, SplitSpec(frozenset(zero_day_names(cfg)), cfg.train_fraction, seed))
    if not cfg.holdout_validation:
        return Splits(train, None, test)
    inner_fit, inner_val = split_indices(d.subset(train), SplitSpec(frozenset(), VALIDATION_FRACTION, seed))
    return Splits(train[inner_fit], train[inner_val], test)


def run_training(cfg: RunConfig, d: FlowDataset | None = None, on_epoch=None) -> tuple[ckpt.Checkpoint, TrainingLog]:
    """Split, scale, train and fit centroids; parameters are rounded to their stored precision."""
    d = d if d is not None else load_dataset(cfg)
    splits = make_splits(d, cfg)
    fit = d.subset(splits.fit)
    if len(fit) == 0:
        raise DataError("training split is empty")
    scaler = fit_scaler(fit, cfg.clamp)
    kind = cfg.loss_kind
    head_classes = default_head_classes(fit, kind)
    mcfg = cfg.model_config(d.f, len(head_classes))
    params, log = train(fit, cfg.train_config(), mcfg, cfg.loss_config(), scaler, head_classes, on_epoch)
    params = ckpt.round_to_f32(params)
    centroids = None
    if kind != "bce":
        Z = embed(params, scaler.transform(fit.features))
        centroids = compute_centroids(Z, fit.labels, head_classes, "centroid")
    return (
        ckpt.Checkpoint(
            params=params,
            class_names=d.class_names,
            scaler=scaler,
            centroids=centroids,
            head_classes=head_classes,
            loss=cfg.loss_config().to_dict(),
            run_config=cfg.to_dict(),
        ),
        log,
    )


def align_vocabulary(d: FlowDataset, class_names) -> FlowDataset:
    """Relabel ``d`` onto the checkpoint's class vocabulary, by name."""
    class_names = tuple(class_names)
    if d.class_names == class_names:
        return d
    missing = [n for n in d.class_names if n not in class_names]
    if missing:
        raise DataError(f"vocabulary mismatch: classes {missing} not known to the checkpoint")
    lut = np.array([class_names.index(n) for n in d.class_names])
    return FlowDataset(d.features, lut[d.labels], class_names, dict(d.metadata))


@dataclass
class EvalResult:
    report: EvalReport
    score_header: list[str]
    score_rows: list[list]


def run_eval(
    ck: ckpt.Checkpoint,
    d: FlowDataset,
    split: str = "test",
    proxy: str = "centroid",
    ood_score: str = "weighted_gaussian",
    tau: float | None = None,
    target_fpr: float | None = None,
    zero_day: list[str] | None = None,
    reference: FlowDataset | None = None,
    eval_config: dict | None = None,
) -> EvalResult:
    """Score one split of ``d`` with a trained checkpoint and compute its metrics.

    Non-centroid proxies and ``target_fpr`` thresholds are fitted on the
    training portion of ``d`` (or on ``reference`` when given).
    """
    if tau is not None and target_fpr is not None:
        raise ConfigError("--tau and --target-fpr are mutually exclusive")
    cfg = RunConfig.from_dict(ck.run_config) if ck.run_config else RunConfig()
    if zero_day is not None:
        cfg = replace(cfg, zero_day=list(zero_day), manifest=None)
    d = align_vocabulary(d, ck.class_names)
    kind = ck.loss.get("kind", cfg.loss_kind)
    zd_ids = set(d.class_ids(zero_day_names(cfg)))

    t0 = time.perf_counter()
    splits = make_splits(d, cfg) if split != "all" or reference is None else None
    rows = np.arange(len(d)) if split == "all" else splits.rows(split, len(d))
    if rows.size == 0:
        raise DataError(f"split {split!r} is empty")
    if reference is not None:
        ref = align_vocabulary(reference, ck.class_names)
    else:
        ref = d.subset(splits.fit if splits.val is None else splits.val) if target_fpr is not None else None
    x = ck.scaler.transform(d.features[rows])
    labels = d.labels[rows]
    Z = embed(ck.params, x)

    centroids = ck.centroids
    need_fit = kind != "bce" and (proxy != "centroid" or centroids is None)
    if need_fit:
        fit_src = align_vocabulary(reference, ck.class_names) if reference is not None else d.subset(splits.fit)
        Zfit = embed(ck.params, ck.scaler.transform(fit_src.features))
        centroids = compute_centroids(Zfit, fit_src.labels, ck.head_classes, proxy)

    report = EvalReport(mode="closr" if kind == "closr" else "binary", proxy=proxy, n_rows=int(rows.size))
    report.config = {
        "train": ck.run_config,
        "eval": {
            "split": split,
            "proxy": proxy,
            "ood_score": ood_score if kind == "closr" else None,
            "tau": tau,
            "target_fpr": target_fpr,
            "zero_day": sorted(d.class_names[c] for c in zd_ids),
            **(eval_config or {}),
        },
    }
    known_rows = ~np.isin(labels, list(zd_ids))
    if known_rows.any():
        report.rank_known = normalized_rank(Z[0][known_rows])
    if (~known_rows).any():
        report.rank_zero_day = normalized_rank(Z[0][~known_rows])

    if kind == "closr":
        header, table = _eval_osr(report, ck, centroids, Z, labels, ood_score, tau, target_fpr, ref)
    else:
        header, table = _eval_binary(report, ck, kind, centroids, Z, labels, zd_ids, tau, target_fpr, ref, d.class_names)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    logger.info("scored %d rows in %.1f ms", rows.size, wall_ms)
    report.wall_ms = round(wall_ms, 3)
    table = [[int(i), *r] for i, r in zip(rows, table)]
    return EvalResult(report, ["sample_index", *header], table)


def _binary_scores(ck, kind, centroids: CentroidSet | None, Z) -> np.ndarray:
    if kind == "bce":
        return Z[0][:, 0]
    return binary_scores(centroids, Z[0])


def _eval_binary(report, ck, kind, centroids, Z, labels, zd_ids, tau, target_fpr, ref, class_names):
    s = _binary_scores(ck, kind, centroids, Z)
    benign = labels == 0
    closed, opened = [], []
    if benign.any():
        for c in sorted(set(labels.tolist()) - {0}):
            m = benign | (labels == c)
            pos = labels[m] == c
            entry = {
                "auroc": auroc(s[m], pos),
                "fpr95": fpr_at_recall(s[m], pos, 0.95),
                "zero_day": c in zd_ids,
                "n": int(pos.sum()),
            }
            report.per_class[class_names[c]] = entry
            (opened if c in zd_ids else closed).append(entry["auroc"])
    report.closed_set_mean_auroc = float(np.mean(closed)) if closed else None
    report.open_set_mean_auroc = float(np.mean(opened)) if opened else None

    if target_fpr is not None:
        Zr = embed(ck.params, ck.scaler.transform(ref.features[ref.labels == 0]))
        tau = float(np.nextafter(threshold_for_fpr(_binary_scores(ck, kind, centroids, Zr), target_fpr), np.inf))
        report.config["eval"]["tau_derived"] = tau
    pred = predict_binary(s, tau) if tau is not None else None
    table = [[int(labels[i]), float(s[i]), "" if pred is None else int(pred[i])] for i in range(len(s))]
    return ["true_label", "s", "predicted_label"], table


def _eval_osr(report, ck, centroids, Z, labels, ood_score, tau, target_fpr, ref):
    head_classes = np.asarray(ck.head_classes)
    sims = centroids.similarities(Z)
    probs = softmax_rows(sims)
    s = osr_scores_from_sims(sims, probs, ood_score)
    report.ood_score = ood_score
    closed_pred = head_classes[np.argmax(probs, axis=1)]
    known = np.isin(labels, head_classes)
    if known.any():
        rep = closed_set_report(closed_pred[known], labels[known], probs[known], head_classes.tolist())
        report.closed_set = {
            "accuracy": rep.accuracy,
            "macro": rep.macro,
            "per_class": {
                ck.class_names[c]: {"precision": p, "recall": r, "f1": f, "fp_rate": fp, "pr_auc": a}
                for c, p, r, f, fp, a in zip(rep.classes, rep.precision, rep.recall, rep.f1, rep.fp_rate, rep.pr_auc)
            },
        }
    if known.any() and (~known).any():
        report.open_set_auc, report.open_auc = open_set_metrics(s, ~known, closed_pred[known], labels[known])

    if target_fpr is not None:
        Zr = embed(ck.params, ck.scaler.transform(ref.features[np.isin(ref.labels, head_classes)]))
        sims_r = centroids.similarities(Zr)
        tau = threshold_for_fpr(osr_scores_from_sims(sims_r, softmax_rows(sims_r), ood_score), target_fpr)
        report.config["eval"]["tau_derived"] = tau
    pred = predict_osr(s, tau, probs, head_classes) if tau is not None else closed_pred
    header = ["true_label", "s", *(f"p_{k}" for k in range(probs.shape[1])), "predicted_label"]
    table = [[int(labels[i]), float(s[i]), *map(float, probs[i]), int(pred[i])] for i in range(len(s))]
    return header, table


def write_table(path: str | Path, header: list[str], rows: list[list]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_embeddings(ck: ckpt.Checkpoint, d: FlowDataset, split: str = "all") -> tuple[list[str], list[list]]:
    """Per-row label, head-wise coordinates, and both distance scalings to every centroid."""
    d = align_vocabulary(d, ck.class_names)
    cfg = RunConfig.from_dict(ck.run_config) if ck.run_config else RunConfig()
    rows = np.arange(len(d)) if split == "all" else make_splits(d, cfg).rows(split, len(d))
    Z = embed(ck.params, ck.scaler.transform(d.features[rows]))
    n_heads = ck.params.config.n_heads
    f_o = ck.params.config.f_o
    header = ["sample_index", "label", "label_id"]
    header += [f"z{k}_{i}" for k in range(n_heads) for i in range(f_o)]
    if ck.centroids is not None:
        header += [col for k in range(n_heads) for col in (f"dist{k}", f"dist{k}_raw")]
    table = []
    for j, r in enumerate(rows):
        line = [int(r), d.class_names[d.labels[r]], int(d.labels[r])]
        line += [float(v) for k in range(n_heads) for v in Z[k][j]]
        if ck.centroids is not None:
            for k in range(n_heads):
                cos = float(Z[k][j] @ ck.centroids.proxies[k])
                line += [min(max((1.0 - cos) / 2.0, 0.0), 1.0), 1.0 - cos]
        table.append(line)
    return header, table


def sweep_values(start: float, stop: float, step: float) -> list[float]:
    if step <= 0 or stop < start:
        raise ConfigError("invalid sweep range")
    n = int(round((stop - start) / step)) + 1
    values = [round(start + i * step, 10) for i in range(n)]
    if values[-1] > stop + 1e-9:
        values.pop()
    return values


def sweep_point(cfg: RunConfig, param: str, value: float, d: FlowDataset) -> dict:
    """Train on 80% of the train split and report mean validation AUROC/FPR@95."""
    point = replace(cfg, **{param: value, "holdout_validation": True}).validate()
    ck, _ = run_training(point, d)
    ck = ckpt.from_bytes(ckpt.to_bytes(ck))
    report = run_eval(ck, d, split="val").report
    row = {"param": param, "value": value, "squared": point.squared, "seed": point.seed}
    if report.mode == "closr":
        row["val_accuracy"] = report.closed_set["accuracy"]
        row["val_macro_f1"] = report.closed_set["macro"]["f1"]
        return row
    fprs = [e["fpr95"] for e in report.per_class.values()]
    row["val_auroc_mean"] = report.closed_set_mean_auroc
    row["val_fpr95_mean"] = float(np.mean(fprs)) if fprs else None
    return row
