"""Flow dataset ingestion, zero-day holdout splits, scaling and class-balanced batching."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from clad.errors import DataError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FlowDataset:
    """Labelled flow records. Class id 0 is always the benign class.

    ``metadata`` carries generator or ingestion facts (e.g. designated
    zero-day classes for synthetic data, dropped-row counts for CSVs).
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DataError("labels length does not match feature rows")
        if len(self.class_names) < 1:
            raise DataError("class vocabulary is empty")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label id outside class vocabulary")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain NaN/Inf")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def f(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, rows: np.ndarray) -> FlowDataset:
        rows = np.asarray(rows, dtype=np.int64)
        return FlowDataset(self.features[rows], self.labels[rows], self.class_names, dict(self.metadata))

    def class_ids(self, names: Sequence[str]) -> list[int]:
        out = []
        for name in names:
            if name not in self.class_names:
                raise DataError(f"unknown class name {name!r}")
            out.append(self.class_names.index(name))
        return out


@dataclass(frozen=True)
class SplitSpec:
    zero_day_classes: frozenset[str] = frozenset()
    train_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "zero_day_classes", frozenset(self.zero_day_classes))
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise DataError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray
    clamp_bound: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.asarray(self.mean, dtype=np.float64)))
        object.__setattr__(self, "std", _frozen(np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)))

    def transform(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        return np.clip(z, -self.clamp_bound, self.clamp_bound)

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "clamp": self.clamp_bound}

    @classmethod
    def from_dict(cls, d: dict) -> FeatureScaler:
        return cls(np.array(d["mean"]), np.array(d["std"]), float(d["clamp"]))


@dataclass(frozen=True, eq=False)
class BatchPlan:
    """Sampling plan for class-balanced batches.

    ``class_weights`` is the inverse class frequency normalised over the
    classes present; a row is drawn with probability proportional to its
    class weight, which makes every present class equally likely per draw.
    """

    batch_size: int
    class_weights: np.ndarray
    seed: int
    batches_per_epoch: int

    @classmethod
    def for_dataset(cls, d: FlowDataset, batch_size: int, seed: int) -> BatchPlan:
        counts = d.class_counts().astype(np.float64)
        weights = np.zeros_like(counts)
        present = counts > 0
        weights[present] = 1.0 / counts[present]
        weights /= weights.sum()
        return cls(batch_size, weights, seed, max(1, math.ceil(len(d) / batch_size)))


def load_csv(path: str | Path, label_column: str = "Label", benign_label: str = "BENIGN") -> FlowDataset:
    """Read a flow CSV export into a :class:`FlowDataset`.

    Rows whose feature cells do not parse as finite reals are dropped; the
    count is logged and stored as ``metadata["dropped_rows"]``. Malicious
    labels get ids 1.. in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        li = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != li]
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        dropped = 0
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(header):
                dropped += 1
                continue
            try:
                values = [float(v) for i, v in enumerate(rec) if i != li]
            except ValueError:
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in values):
                dropped += 1
                continue
            rows.append(values)
            raw_labels.append(rec[li].strip())

    if not rows:
        raise DataError(f"{path}: zero usable rows")
    if benign_label not in raw_labels:
        raise DataError(f"{path}: benign class absent (no rows labelled {benign_label!r})")
    names = [benign_label]
    for lab in raw_labels:
        if lab not in names:
            names.append(lab)
    index = {n: i for i, n in enumerate(names)}
    labels = np.array([index[lab] for lab in raw_labels], dtype=np.int64)
    if dropped:
        logger.warning("%s: dropped %d rows with unparseable or non-finite features", path, dropped)
    return FlowDataset(
        np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names)),
        labels,
        tuple(names),
        {"dropped_rows": dropped, "feature_names": feature_names, "source": str(path)},
    )


def write_csv(d: FlowDataset, path: str | Path, label_column: str = "Label") -> None:
    names = d.metadata.get("feature_names") or [f"f{i}" for i in range(d.f)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, label_column])
        for x, y in zip(d.features, d.labels):
            w.writerow([*(repr(float(v)) for v in x), d.class_names[y]])


def split_indices(d: FlowDataset, s: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (sorted) of the train and test sides of :func:`split_holdout`."""
    zd_ids = set(d.class_ids(sorted(s.zero_day_classes)))
    if 0 in zd_ids:
        raise DataError("zero-day classes may not include the benign class")
    rng = np.random.default_rng(s.seed)
    train_rows, test_rows = [np.empty(0, np.int64)], [np.empty(0, np.int64)]
    for c in range(d.n_classes):
        rows = np.flatnonzero(d.labels == c)
        if c in zd_ids:
            test_rows.append(rows)
            continue
        if rows.size == 0:
            continue
        if rows.size < 2:
            raise DataError(f"class {d.class_names[c]!r} has {rows.size} row(s); need at least 2 to split")
        rows = rows[rng.permutation(rows.size)]
        n_train = int(math.floor(rows.size * s.train_fraction))
        train_rows.append(rows[:n_train])
        test_rows.append(rows[n_train:])
    return np.sort(np.concatenate(train_rows)), np.sort(np.concatenate(test_rows))


def split_holdout(d: FlowDataset, s: SplitSpec) -> tuple[FlowDataset, FlowDataset]:
    """Stratified train/test split with every zero-day row sent to test.

    Per class, ``floor(n * train_fraction)`` shuffled rows go to train. Both
    sides keep the full class vocabulary.
    """
    train, test = split_indices(d, s)
    return d.subset(train), d.subset(test)


def fit_scaler(train: FlowDataset, clamp_bound: float = 10.0) -> FeatureScaler:
    if len(train) == 0:
        raise DataError("cannot fit scaler on an empty dataset")
    return FeatureScaler(train.features.mean(axis=0), train.features.std(axis=0), clamp_bound)


def balanced_batches(d: FlowDataset, plan: BatchPlan) -> Iterator[np.ndarray]:
    """Yield ``plan.batches_per_epoch`` row-index batches drawn with replacement.

    Every batch holds at least one benign row: a batch without one is redrawn
    up to 100 times, after which a random benign row is written over a random
    position.
    """
    if len(d) == 0:
        raise DataError("cannot sample batches from an empty dataset")
    if plan.batch_size < 4:
        raise DataError("batch_size must be at least 4")
    benign = np.flatnonzero(d.labels == 0)
    if benign.size == 0:
        raise DataError("no benign rows to anchor batches")
    p = plan.class_weights[d.labels]
    p = p / p.sum()
    rng = np.random.default_rng(plan.seed)
    for _ in range(plan.batches_per_epoch):
        for _attempt in range(100):
            batch = rng.choice(len(d), size=plan.batch_size, replace=True, p=p)
            if np.any(d.labels[batch] == 0):
                break
        else:
            batch[rng.integers(plan.batch_size)] = benign[rng.integers(benign.size)]
        yield batch


def synth_blobs(
    n_classes: int = 4,
    n_per_class: int = 500,
    f: int = 20,
    separation: float = 6.0,
    zero_day_count: int = 1,
    seed: int = 0,
) -> FlowDataset:
    """Unit-covariance Gaussian blobs with means on a randomly rotated regular simplex.

    All pairwise mean distances equal ``separation``. The last
    ``zero_day_count`` classes are listed in ``metadata["zero_day_classes"]``.
    """
    if n_classes < 2 or n_per_class < 1 or f < 1:
        raise DataError("need n_classes >= 2, n_per_class >= 1, f >= 1")
    if not 0 <= zero_day_count < n_classes - 1:
        raise DataError("zero_day_count must leave at least one known malicious class")
    if f < n_classes:
        raise DataError(f"f={f} too small to place {n_classes} equidistant means (need f >= n_classes)")
    if separation < 0:
        raise DataError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    rotation, _ = np.linalg.qr(rng.standard_normal((f, f)))
    vertices = np.eye(n_classes, f) * (separation / math.sqrt(2.0))
    means = vertices @ rotation.T
    features = np.concatenate([rng.standard_normal((n_per_class, f)) + means[c] for c in range(n_classes)])
    labels = np.repeat(np.arange(n_classes), n_per_class)
    names = ("BENIGN", *(f"ATTACK_{c}" for c in range(1, n_classes)))
    zero_day = list(names[n_classes - zero_day_count :]) if zero_day_count else []
    return FlowDataset(
        features,
        labels,
        names,
        {
            "zero_day_classes": zero_day,
            "feature_names": [f"f{i}" for i in range(f)],
            "generator": {
                "n_classes": n_classes,
                "n_per_class": n_per_class,
                "f": f,
                "separation": separation,
                "zero_day_count": zero_day_count,
                "seed": seed,
            },
        },
    )
