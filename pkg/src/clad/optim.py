"""AdamW, the warmup + cosine learning-rate schedule, and the training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from clad.data import BatchPlan, FeatureScaler, FlowDataset, balanced_batches, fit_scaler
from clad.errors import ConfigError, DataError, NumericError
from clad.losses import LossConfig, batch_loss
from clad.model import ModelConfig, NetworkParameters, backward, forward, init_network

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    warmup_epochs: int = 20
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 128
    betas: tuple[float, float] = (0.9, 0.999)
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epochs and warmup_epochs must be non-negative")
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            raise ConfigError(f"warmup_epochs ({self.warmup_epochs}) must be < epochs ({self.epochs})")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.batch_size < 4:
            raise ConfigError("batch_size must be at least 4")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass(eq=False)
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, p: NetworkParameters) -> OptimizerState:
        return cls(p.zeros_like(), p.zeros_like(), 0)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``base_lr`` over ``warmup_epochs``, then cosine decay to 0."""
    if not 0 <= epoch < cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs
    t = (epoch - cfg.warmup_epochs) / (cfg.epochs - cfg.warmup_epochs)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


def adamw_step(p: NetworkParameters, grads: list[np.ndarray], s: OptimizerState, lr: float, cfg: TrainConfig):
    """One in-place AdamW update; weight decay is decoupled and skips biases."""
    if len(grads) != len(p.tensors):
        raise ConfigError("gradient list does not match parameters")
    for g, t in zip(grads, p.tensors):
        if g.shape != t.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {t.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient entries; step aborted")
    b1, b2 = cfg.betas
    s.step += 1
    bc1 = 1.0 - b1**s.step
    bc2 = 1.0 - b2**s.step
    for t, g, m, v in zip(p.tensors, grads, s.m, s.v):
        if t.ndim == 2 and cfg.weight_decay:
            t -= lr * cfg.weight_decay * t
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_epsilon)
    return p, s


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _blas_threads() -> int | None:
    try:
        from threadpoolctl import threadpool_info
    except ImportError:
        return None
    counts = [pool.get("num_threads") for pool in threadpool_info() if pool.get("user_api") == "blas"]
    return counts[0] if counts else None


@dataclass
class TrainingLog:
    records: list[dict] = field(default_factory=list)

    def lines(self) -> list[str]:
        import json

        return [json.dumps(r) for r in self.records]


def train(
    train_data: FlowDataset,
    cfg: TrainConfig,
    mcfg: ModelConfig,
    lcfg: LossConfig,
    scaler: FeatureScaler | None = None,
    head_classes: tuple[int, ...] | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[NetworkParameters, TrainingLog]:
    """Train from ``mcfg.seed`` initialisation; deterministic given all seeds.

    Raises :class:`NumericError` (carrying ``params``, the last finite state)
    if the loss or parameters become non-finite.
    """
    if len(train_data) == 0:
        raise DataError("training data is empty")
    if not np.any(train_data.labels == 0):
        raise DataError("training data has no benign rows")
    if train_data.f != mcfg.f:
        raise ConfigError(f"model expects {mcfg.f} features, data has {train_data.f}")
    if head_classes is None:
        head_classes = default_head_classes(train_data, lcfg.kind)
    if mcfg.n_heads != len(head_classes):
        raise ConfigError(f"model has {mcfg.n_heads} heads but {len(head_classes)} classes are modelled")
    scaler = scaler or fit_scaler(train_data)
    x_all = scaler.transform(train_data.features)

    params = init_network(mcfg)
    state = OptimizerState.zeros(params)
    log = TrainingLog()
    threads = _blas_threads()
    heads = list(range(mcfg.n_heads))
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, cfg)
        plan = BatchPlan.for_dataset(train_data, cfg.batch_size, _derive_seed(cfg.seed, epoch))
        losses = []
        for step, rows in enumerate(balanced_batches(train_data, plan)):
            eb = forward(params, x_all[rows], heads, training=True, dropout_seed=_derive_seed(cfg.seed, epoch, step, 1))
            loss, grads = batch_loss(lcfg, eb.embeddings, train_data.labels[rows], head_classes)
            if not math.isfinite(loss):
                err = NumericError(f"non-finite loss at epoch {epoch} step {step}")
                err.params = params
                raise err
            last_good = [t.copy() for t in params.tensors]
            adamw_step(params, backward(params, eb, grads), state, lr, cfg)
            if not params.is_finite():
                err = NumericError(f"non-finite parameters after epoch {epoch} step {step}")
                err.params = NetworkParameters(mcfg, last_good)
                raise err
            losses.append(loss)
        record = {
            "epoch": epoch,
            "lr": lr,
            "loss_mean": float(np.mean(losses)),
            "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3),
            "threads": threads,
        }
        log.records.append(record)
        logger.debug("epoch %d lr %.3g loss %.6f", epoch, lr, record["loss_mean"])
        if on_epoch is not None:
            on_epoch(record)
    return params, log


def default_head_classes(d: FlowDataset, kind: str) -> tuple[int, ...]:
    """Classes given their own head: every class present in ``d`` for CLOSR, else benign only."""
    if kind == "closr":
        return tuple(int(c) for c in np.flatnonzero(d.class_counts() > 0))
    return (0,)
