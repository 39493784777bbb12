"""Class proxies (centroids and variants), OOD scores and decision rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from clad.errors import ConfigError, DataError, NumericError

PROXIES = ("centroid", "median", "trimmed_mean", "medoid", "neighbour")
OOD_SCORES = ("weighted_gaussian", "gaussian", "energy")
TRIM_FRACTION = 0.1


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if not n > 1e-12:
        raise NumericError("class proxy has zero norm; embeddings cancel out")
    return v / n


def compute_centroid(embeddings: np.ndarray, proxy: str = "centroid") -> np.ndarray:
    """Representative of one class's embeddings.

    Returns a unit vector, except for ``neighbour`` which returns (a copy of)
    all rows so that scoring can use the nearest stored row.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] == 0:
        raise DataError("need at least one embedding row to compute a class proxy")
    if proxy == "centroid":
        return _unit(E.sum(axis=0))
    if proxy == "median":
        return _unit(np.median(E, axis=0))
    if proxy == "trimmed_mean":
        centre = _unit(E.sum(axis=0))
        n_keep = E.shape[0] - int(np.floor(TRIM_FRACTION * E.shape[0]))
        order = np.argsort(-(E @ centre), kind="stable")
        return _unit(E[order[:n_keep]].sum(axis=0))
    if proxy == "medoid":
        # summed cosine distance of row i is (n - z_i . sum(z)) / 2
        return E[int(np.argmax(E @ E.sum(axis=0)))].copy()
    if proxy == "neighbour":
        return E.copy()
    raise ConfigError(f"unknown proxy {proxy!r}; expected one of {PROXIES}")


@dataclass(eq=False)
class CentroidSet:
    """One proxy per head; ``head_classes[k]`` is the class id head ``k`` models."""

    proxies: list[np.ndarray]
    method: str = "centroid"
    head_classes: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.method not in PROXIES:
            raise ConfigError(f"unknown proxy {self.method!r}")
        if len(self.proxies) != len(self.head_classes):
            raise ConfigError("one proxy per head required")

    @property
    def vectors(self) -> np.ndarray:
        if self.method == "neighbour":
            raise ConfigError("neighbour proxy keeps reference rows, not mean directions")
        return np.stack(self.proxies)

    def similarity(self, head: int, Z: np.ndarray) -> np.ndarray:
        """Cosine similarity of each row of ``Z`` to the proxy of ``head``."""
        P = self.proxies[head]
        if self.method == "neighbour":
            return (np.atleast_2d(Z) @ P.T).max(axis=1)
        return np.atleast_2d(Z) @ P

    def similarities(self, z_per_head) -> np.ndarray:
        """Matrix (rows x heads) of head-wise similarities."""
        return np.stack([self.similarity(k, z_per_head[k]) for k in range(len(self.proxies))], axis=1)


def compute_centroids(
    z_per_head,
    labels: np.ndarray,
    head_classes=(0,),
    proxy: str = "centroid",
) -> CentroidSet:
    """Fit the proxy of every head on training rows of the class it models."""
    labels = np.asarray(labels)
    proxies = []
    for k, c in enumerate(head_classes):
        rows = labels == c
        if not rows.any():
            raise DataError(f"no rows of class {c} to fit head {k}")
        proxies.append(compute_centroid(np.asarray(z_per_head[k])[rows], proxy))
    return CentroidSet(proxies, proxy, tuple(int(c) for c in head_classes))


def score_binary(z: np.ndarray, mu: np.ndarray) -> np.ndarray | float:
    """Negative cosine similarity to the benign direction; in [-1, 1], higher = more anomalous."""
    s = -(np.asarray(z) @ np.asarray(mu))
    return float(s) if np.ndim(s) == 0 else s


def binary_scores(centroids: CentroidSet, Z: np.ndarray) -> np.ndarray:
    """Binary OOD score of every row under head 0, for any proxy."""
    return -centroids.similarity(0, Z)


def predict_binary(s, tau: float):
    """0 (benign) iff ``s < tau``, otherwise 1; equality counts as malicious."""
    out = (np.asarray(s) >= tau).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def softmax_rows(sims: np.ndarray) -> np.ndarray:
    sims = np.atleast_2d(np.asarray(sims, dtype=np.float64))
    e = np.exp(sims - sims.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def closed_set_probs(z_per_head, centroids: CentroidSet) -> np.ndarray:
    """Softmax over head-wise similarities: P(y=c | x, y known), one row per sample."""
    return softmax_rows(centroids.similarities(z_per_head))


def osr_scores_from_sims(sims: np.ndarray, probs: np.ndarray, variant: str = "weighted_gaussian") -> np.ndarray:
    sims = np.atleast_2d(sims)
    if variant == "weighted_gaussian":
        return -(probs * sims**2).sum(axis=1)
    if variant == "gaussian":
        top = np.argmax(probs, axis=1)
        return -(sims[np.arange(len(sims)), top] ** 2)
    if variant == "energy":
        m = sims.max(axis=1)
        return -(m + np.log(np.exp(sims - m[:, None]).sum(axis=1)))
    raise ConfigError(f"unknown OOD score {variant!r}; expected one of {OOD_SCORES}")


def score_osr(z_per_head, centroids: CentroidSet, probs: np.ndarray, variant: str = "weighted_gaussian") -> np.ndarray:
    """Open-set OOD score; larger means more likely an unseen class.

    ``weighted_gaussian`` is minus the probability-weighted squared similarity
    (in [-1, 0]); ``gaussian`` keeps only the argmax head; ``energy`` is minus
    the log-sum-exp of the similarities.
    """
    return osr_scores_from_sims(centroids.similarities(z_per_head), np.atleast_2d(probs), variant)


def predict_osr(s, tau: float, probs: np.ndarray, head_classes=None):
    """-1 when ``s > tau``, otherwise the argmax class (lowest id wins ties)."""
    probs = np.atleast_2d(probs)
    top = np.argmax(probs, axis=1)
    if head_classes is not None:
        top = np.asarray(head_classes)[top]
    out = np.where(np.atleast_1d(s) > tau, -1, top).astype(np.int64)
    return int(out[0]) if np.ndim(s) == 0 else out


def threshold_for_fpr(reference_scores: np.ndarray, target_fpr: float) -> float:
    """Threshold from the empirical quantile of in-distribution scores.

    At most ``target_fpr`` of ``reference_scores`` lie strictly above the
    returned value, so flagging ``s > tau`` keeps the rate within target.
    """
    if not 0.0 <= target_fpr <= 1.0:
        raise ConfigError("target FPR must be in [0, 1]")
    ref = np.sort(np.asarray(reference_scores, dtype=np.float64))
    if ref.size == 0:
        raise DataError("no reference scores to derive a threshold")
    return float(np.quantile(ref, 1.0 - target_fpr, method="higher"))
