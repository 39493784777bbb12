"""Threshold-free and closed-set evaluation metrics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from clad.errors import DataError

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-6


def _split(scores, positives):
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives).astype(bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and of equal length")
    return scores[positives], scores[~positives]


def auroc(scores, positives) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) with ties counted as one half.

    Uses mid-ranks of the pooled scores, so it runs in O(M log M).
    """
    pos, neg = _split(scores, positives)
    if pos.size == 0 or neg.size == 0:
        raise DataError("auroc needs at least one positive and one negative")
    pooled = np.concatenate([pos, neg])
    _, inverse, counts = np.unique(pooled, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midrank = upper - (counts - 1) / 2.0
    rank_sum = midrank[inverse[: pos.size]].sum()
    u = rank_sum - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def fpr_at_recall(scores, positives, recall_target: float = 0.95) -> float:
    """False-positive rate at the highest threshold whose recall reaches ``recall_target``.

    Rows with ``score >= threshold`` are flagged positive.
    """
    pos, neg = _split(scores, positives)
    if pos.size == 0 or neg.size == 0:
        raise DataError("fpr_at_recall needs at least one positive and one negative")
    n_needed = max(1, math.ceil(recall_target * pos.size))
    if (n_needed - 1) / pos.size >= recall_target:
        n_needed -= 1
    n_needed = max(n_needed, 1)
    threshold = np.sort(pos)[::-1][n_needed - 1]
    return float(np.mean(neg >= threshold))


def pr_auc(scores, positives) -> float:
    """Average precision: sum over distinct thresholds of recall gain times precision."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives).astype(bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise DataError("pr_auc needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], positives[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # keep the last index of every run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class ClosedSetReport:
    accuracy: float
    classes: list[int]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    fp_rate: list[float]
    pr_auc: list[float] | None = None

    @property
    def macro(self) -> dict:
        out = {
            "precision": float(np.mean(self.precision)),
            "recall": float(np.mean(self.recall)),
            "f1": float(np.mean(self.f1)),
            "fp_rate": float(np.mean(self.fp_rate)),
        }
        if self.pr_auc is not None:
            out["pr_auc"] = float(np.mean(self.pr_auc))
        return out


def closed_set_report(predicted, truth, probs=None, prob_classes=None) -> ClosedSetReport:
    """One-vs-rest confusion counts per class present in ``truth``, macro-averaged.

    ``probs`` (rows x len(prob_classes)) enables per-class PR-AUC.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise DataError("predicted and true labels differ in length")
    if truth.size == 0:
        raise DataError("closed_set_report on empty input")
    classes = [int(c) for c in np.unique(truth)]
    prec, rec, f1, fpr, ap = [], [], [], [], []
    for c in classes:
        t = truth == c
        p = predicted == c
        tp = int(np.sum(t & p))
        fp = int(np.sum(~t & p))
        fn = int(np.sum(t & ~p))
        tn = int(np.sum(~t & ~p))
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        prec.append(pc)
        rec.append(rc)
        f1.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
        fpr.append(fp / (fp + tn) if fp + tn else 0.0)
        if probs is not None:
            col = list(prob_classes).index(c) if prob_classes is not None else c
            ap.append(pr_auc(np.asarray(probs)[:, col], t))
    return ClosedSetReport(
        accuracy=float(np.mean(predicted == truth)),
        classes=classes,
        precision=prec,
        recall=rec,
        f1=f1,
        fp_rate=fpr,
        pr_auc=ap if probs is not None else None,
    )


def open_set_metrics(osr_scores, is_unknown, closed_preds, closed_truth) -> tuple[float, float]:
    """(open-set AUC, OpenAUC) with OpenAUC = closed-set accuracy x open-set AUC.

    ``closed_preds``/``closed_truth`` cover the known-class rows only.
    """
    is_unknown = np.asarray(is_unknown).astype(bool)
    if is_unknown.all() or not is_unknown.any():
        raise DataError("open-set metrics need both known and unknown rows")
    closed_preds = np.asarray(closed_preds)
    closed_truth = np.asarray(closed_truth)
    if closed_preds.size == 0 or closed_preds.shape != closed_truth.shape:
        raise DataError("closed-set predictions must be non-empty and match truth")
    osa = auroc(osr_scores, is_unknown)
    acc = float(np.mean(closed_preds == closed_truth))
    return osa, acc * osa


def normalized_rank(E, rtol: float = RANK_RTOL) -> float:
    """Numerical rank (singular values >= ``rtol`` x largest) divided by the column count."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    if E.shape[0] == 0:
        raise DataError("normalized_rank needs at least one row")
    sv = np.linalg.svd(E, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        logger.warning("normalized_rank: zero matrix, rank 0")
        return 0.0
    return float(np.sum(sv >= rtol * sv[0]) / E.shape[1])


@dataclass
class EvalReport:
    """Evaluation results; ``to_json`` and ``flat`` are the serialised forms."""

    mode: str
    per_class: dict[str, dict] = field(default_factory=dict)
    closed_set_mean_auroc: float | None = None
    open_set_mean_auroc: float | None = None
    closed_set: dict | None = None
    open_set_auc: float | None = None
    open_auc: float | None = None
    rank_known: float | None = None
    rank_zero_day: float | None = None
    proxy: str = "centroid"
    ood_score: str | None = None
    n_rows: int = 0
    config: dict = field(default_factory=dict)
    wall_ms: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["wall_ms"] is None:
            d.pop("wall_ms")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def flat(self) -> dict:
        """Single-level dict for CSV aggregation (config and per-class blocks flattened)."""
        out: dict = {}

        def put(prefix, value):
            if isinstance(value, dict):
                for k in sorted(value):
                    put(f"{prefix}.{k}" if prefix else str(k), value[k])
            elif isinstance(value, list):
                out[prefix] = json.dumps(value)
            else:
                out[prefix] = value

        put("", self.to_dict())
        return out
