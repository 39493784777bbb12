"""Training objectives on hyperspherical embeddings, with analytic gradients.

Every loss returns ``(value, grads)`` where ``grads`` maps a head index to
dL/d(embeddings of that head), ready for :func:`clad.model.backward`.

CLAD models benign traffic as a von Mises-Fisher distribution: each benign
anchor is pulled toward the other benign rows in the batch (a Monte-Carlo
estimate of the benign mean direction) and pushed away from the malicious
rows. Taking the log of the vMF likelihood ratio with tied concentrations
leaves a difference of mean cosine distances; squaring the distances and
writing the negative term as ``(1 - d)^2`` gives the loss implemented here.
The normalising constants cancel, so they never appear.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from clad import kernels
from clad.errors import ConfigError, DataError

LOSS_KINDS = ("bce", "supcon", "clad", "closr", "contrastive")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "clad"
    margin: float = 1.0
    squared: bool = True
    alpha: float = 0.5
    temperature: float = 0.1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not 0.0 < self.margin <= 1.0:
            raise ConfigError(f"margin must be in (0, 1], got {self.margin}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")

    @property
    def power(self) -> int:
        return 2 if self.squared else 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class BatchView:
    """Embeddings of one batch under each head, with their class labels.

    ``head_classes[k]`` is the class id modelled by head ``k``.
    """

    embeddings: dict[int, np.ndarray]
    labels: np.ndarray
    head_classes: tuple[int, ...] = (0,)

    def __post_init__(self):
        if not isinstance(self.embeddings, dict):
            self.embeddings = dict(enumerate(self.embeddings))
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def binary(self) -> np.ndarray:
        return (self.labels != 0).astype(np.int64)

    def positives(self, i: int) -> np.ndarray:
        idx = np.flatnonzero(self.labels == self.labels[i])
        return idx[idx != i]

    def negatives(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels != self.labels[i])

    def others(self, i: int) -> np.ndarray:
        idx = np.arange(len(self.labels))
        return idx[idx != i]


def cosine_distance(z: np.ndarray, z2: np.ndarray) -> float:
    """Rescaled cosine distance ``(1 - z . z2) / 2`` in [0, 1] for unit vectors."""
    z = np.asarray(z, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if __debug__:
        assert abs(np.linalg.norm(z) - 1.0) < 1e-6 and abs(np.linalg.norm(z2) - 1.0) < 1e-6, "inputs must be unit vectors"
    return float(min(max((1.0 - float(z @ z2)) / 2.0, 0.0), 1.0))


def bce_loss(logits: np.ndarray, y_binary: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on raw logits; returns (loss, dloss/dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    y = np.asarray(y_binary, dtype=np.float64)
    if logits.shape != y.shape:
        raise DataError("logits and labels differ in length")
    per_row = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
    return float(per_row.mean()), (sig - y) / logits.size


def supcon_loss(view: BatchView, temperature: float, head: int = 0) -> tuple[float, dict[int, np.ndarray]]:
    """Supervised contrastive loss averaged over anchors with at least one positive."""
    z = np.asarray(view.embeddings[head], dtype=np.float64)
    y = view.labels
    B = z.shape[0]
    logits = (z @ z.T) / temperature
    others = ~np.eye(B, dtype=bool)
    pos = (y[:, None] == y[None, :]) & others
    n_pos = pos.sum(axis=1)
    anchors = n_pos > 0
    n_anchor = int(anchors.sum())
    if n_anchor == 0:
        raise DataError("every anchor lacks a positive; supcon undefined for this batch")

    masked = np.where(others, logits, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    log_denom = row_max[:, 0] + np.log(np.exp(masked - row_max).sum(axis=1))
    mean_pos = np.where(pos, logits, 0.0).sum(axis=1) / np.maximum(n_pos, 1)
    loss = float(((log_denom - mean_pos) * anchors).sum() / n_anchor)

    soft = np.exp(masked - log_denom[:, None])
    coef = soft - np.where(pos, 1.0 / np.maximum(n_pos, 1)[:, None], 0.0)
    coef = coef * anchors[:, None] / (n_anchor * temperature)
    grad = coef @ z + coef.T @ z
    return loss, {head: grad}


def _hinge(z: np.ndarray, labels: np.ndarray, anchors: np.ndarray, cfg: LossConfig):
    return kernels.pair_hinge_loss(z, labels, anchors, cfg.margin, cfg.power, 2.0 * cfg.alpha, 2.0 * (1.0 - cfg.alpha))


def clad_loss(view: BatchView, cfg: LossConfig = LossConfig()) -> tuple[float, dict[int, np.ndarray]]:
    """CLAD on head 0: only benign rows act as anchors.

    Per benign anchor the loss is ``2a * mean_P d^q + 2(1-a) * mean_N max(0, m - d)^q``;
    with ``m=1, q=2, a=0.5`` this is the plain benign-anchored loss.
    """
    binary = view.binary
    benign = binary == 0
    if not benign.any():
        raise DataError("clad_loss needs at least one benign row in the batch")
    loss, grad, n = _hinge(view.embeddings[0], binary, benign, cfg)
    if n == 0:
        raise DataError("all anchors skipped: batch has a single row")
    return float(loss), {0: grad}


def contrastive_loss(view: BatchView, cfg: LossConfig = LossConfig()) -> tuple[float, dict[int, np.ndarray]]:
    """Symmetric variant of :func:`clad_loss`: every row is an anchor, positives share its class."""
    loss, grad, n = _hinge(view.embeddings[0], view.labels, np.ones(len(view.labels), dtype=bool), cfg)
    if n == 0:
        raise DataError("all anchors skipped: batch has a single row")
    return float(loss), {0: grad}


def closr_loss(view: BatchView, cfg: LossConfig = LossConfig()) -> tuple[float, dict[int, np.ndarray]]:
    """Sum over heads of the one-vs-rest CLAD loss for that head's class.

    Head ``k`` anchors the rows of class ``head_classes[k]`` in its own
    subspace; classes absent from the batch contribute nothing.
    """
    if len(view.labels) == 0:
        raise DataError("closr_loss on an empty batch")
    total = 0.0
    grads: dict[int, np.ndarray] = {}
    for k, c in enumerate(view.head_classes):
        member = view.labels == c
        z = view.embeddings[k]
        if not member.any():
            grads[k] = np.zeros_like(z)
            continue
        loss, grad, _ = _hinge(z, member.astype(np.int64), member, cfg)
        total += loss
        grads[k] = grad
    return float(total), grads


def batch_loss(cfg: LossConfig, embeddings: dict[int, np.ndarray], labels: np.ndarray, head_classes=(0,)):
    """Dispatch on ``cfg.kind``; used by the training loop."""
    view = BatchView(embeddings, labels, tuple(head_classes))
    if cfg.kind == "clad":
        return clad_loss(view, cfg)
    if cfg.kind == "closr":
        return closr_loss(view, cfg)
    if cfg.kind == "contrastive":
        return contrastive_loss(view, cfg)
    if cfg.kind == "supcon":
        return supcon_loss(view, cfg.temperature)
    logits = view.embeddings[0][:, 0]
    loss, g = bce_loss(logits, view.binary)
    return loss, {0: g[:, None]}
