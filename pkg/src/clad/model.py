"""MLP encoder with per-class linear projection heads onto the unit hypersphere.

Forward and backward passes are written out by hand in numpy (float64) so
that gradients can be checked against finite differences exactly.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from clad.errors import ConfigError

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``normalize=False`` turns the heads into plain linear outputs; it exists
    for the BCE baseline, whose single head emits one logit (``f_o=1``).
    """

    f: int
    d_model: int = 64
    depth: int = 3
    f_o: int = 16
    n_heads: int = 1
    dropout_rate: float = 0.0
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        for name in ("f", "d_model", "depth", "f_o", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.normalize and self.f_o < 2:
            raise ConfigError("f_o must be >= 2 for hyperspherical embeddings")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def shapes(self) -> list[tuple[int, ...]]:
        """Tensor shapes in declaration (and checkpoint) order."""
        out: list[tuple[int, ...]] = [(self.f, self.d_model), (self.d_model,)]
        for _ in range(self.depth):
            out += [(self.d_model, self.d_model), (self.d_model,)]
        for _ in range(self.n_heads):
            out += [(self.d_model, self.f_o), (self.f_o,)]
        return out


@dataclass(eq=False)
class NetworkParameters:
    """The trainable state: input projection, ``depth`` blocks, then heads.

    ``tensors`` alternates weight, bias in declaration order; the named
    accessors are views into it.
    """

    config: ModelConfig
    tensors: list[np.ndarray]

    def __post_init__(self):
        shapes = self.config.shapes()
        if len(self.tensors) != len(shapes):
            raise ConfigError(f"expected {len(shapes)} tensors, got {len(self.tensors)}")
        for t, s in zip(self.tensors, shapes):
            if t.shape != s:
                raise ConfigError(f"tensor shape {t.shape} does not match config shape {s}")

    @property
    def input_layer(self) -> tuple[np.ndarray, np.ndarray]:
        return self.tensors[0], self.tensors[1]

    def block(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        i = 2 + 2 * k
        return self.tensors[i], self.tensors[i + 1]

    def head(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        i = 2 + 2 * self.config.depth + 2 * c
        return self.tensors[i], self.tensors[i + 1]

    def count(self) -> int:
        return sum(t.size for t in self.tensors)

    def copy(self) -> NetworkParameters:
        return NetworkParameters(self.config, [t.copy() for t in self.tensors])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors)

    def zeros_like(self) -> list[np.ndarray]:
        return [np.zeros_like(t) for t in self.tensors]


@dataclass(eq=False)
class EmbeddingBatch:
    """Unit-norm embeddings per requested head plus the activations backward needs."""

    embeddings: dict[int, np.ndarray]
    x: np.ndarray
    pre_act: list[np.ndarray] = field(default_factory=list)
    layer_inputs: list[np.ndarray] = field(default_factory=list)
    dropout_masks: list[np.ndarray | None] = field(default_factory=list)
    head_input: np.ndarray | None = None
    head_norms: dict[int, np.ndarray] = field(default_factory=dict)
    degenerate_rows: int = 0

    def __getitem__(self, head: int) -> np.ndarray:
        return self.embeddings[head]


def init_network(cfg: ModelConfig) -> NetworkParameters:
    """Glorot-uniform weights, zero biases, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    tensors = []
    for shape in cfg.shapes():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors.append(rng.uniform(-limit, limit, size=shape))
        else:
            tensors.append(np.zeros(shape))
    return NetworkParameters(cfg, tensors)


def encode(p: NetworkParameters, x: np.ndarray, training: bool = False, dropout_seed: int = 0, cache: EmbeddingBatch | None = None) -> np.ndarray:
    """Shared encoder: input linear, then ``depth`` x (linear, ReLU, dropout)."""
    cfg = p.config
    W, b = p.input_layer
    h = x @ W + b
    rng = np.random.default_rng(dropout_seed) if training and cfg.dropout_rate > 0 else None
    keep = 1.0 - cfg.dropout_rate
    for k in range(cfg.depth):
        W, b = p.block(k)
        u = h @ W + b
        r = np.maximum(u, 0.0)
        mask = None
        if rng is not None:
            mask = (rng.random(u.shape) < keep) / keep
            r = r * mask
        if cache is not None:
            cache.layer_inputs.append(h)
            cache.pre_act.append(u)
            cache.dropout_masks.append(mask)
        h = r
    return h


def forward(
    p: NetworkParameters,
    x_batch: np.ndarray,
    head_ids=None,
    training: bool = False,
    dropout_seed: int = 0,
) -> EmbeddingBatch:
    """Embed a batch under the requested heads (all heads when ``head_ids`` is None)."""
    cfg = p.config
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.f:
        raise ConfigError(f"expected input with {cfg.f} columns, got shape {x.shape}")
    heads = range(cfg.n_heads) if head_ids is None else sorted(set(head_ids))
    out = EmbeddingBatch(embeddings={}, x=x)
    h = encode(p, x, training, dropout_seed, out)
    out.head_input = h
    for c in heads:
        if not 0 <= c < cfg.n_heads:
            raise ConfigError(f"head {c} out of range (n_heads={cfg.n_heads})")
        W, b = p.head(c)
        v = h @ W + b
        if not cfg.normalize:
            out.embeddings[c] = v
            continue
        norms = np.linalg.norm(v, axis=1)
        small = norms < NORM_EPS
        if small.any():
            out.degenerate_rows += int(small.sum())
            logger.warning("head %d: %d embedding(s) with norm < %g", c, int(small.sum()), NORM_EPS)
        denom = np.maximum(norms, NORM_EPS)
        out.embeddings[c] = v / denom[:, None]
        out.head_norms[c] = denom
    return out


def backward(p: NetworkParameters, batch: EmbeddingBatch, grad_embeddings: dict[int, np.ndarray]) -> list[np.ndarray]:
    """Reverse-mode gradient of a loss w.r.t. every parameter tensor.

    ``grad_embeddings`` maps head index to dL/dz for that head; heads not
    listed contribute nothing.
    """
    cfg = p.config
    if batch.head_input is None or len(batch.pre_act) != cfg.depth:
        raise ConfigError("backward needs the activations retained by forward")
    grads = p.zeros_like()
    h = batch.head_input
    dh = np.zeros_like(h)
    base = 2 + 2 * cfg.depth
    for c, g in grad_embeddings.items():
        if c not in batch.embeddings:
            raise ConfigError(f"head {c} was not evaluated in forward")
        g = np.asarray(g, dtype=np.float64)
        if cfg.normalize:
            z = batch.embeddings[c]
            norms = batch.head_norms[c]
            radial = np.einsum("ij,ij->i", z, g)
            dv = (g - z * radial[:, None]) / norms[:, None]
            small = norms <= NORM_EPS
            if small.any():
                dv[small] = g[small] / NORM_EPS
        else:
            dv = g
        W, _ = p.head(c)
        grads[base + 2 * c] += h.T @ dv
        grads[base + 2 * c + 1] += dv.sum(axis=0)
        dh += dv @ W.T
    for k in reversed(range(cfg.depth)):
        mask = batch.dropout_masks[k]
        if mask is not None:
            dh = dh * mask
        du = dh * (batch.pre_act[k] > 0)
        W, _ = p.block(k)
        grads[2 + 2 * k] = batch.layer_inputs[k].T @ du
        grads[3 + 2 * k] = du.sum(axis=0)
        dh = du @ W.T
    grads[0] = batch.x.T @ dh
    grads[1] = dh.sum(axis=0)
    return grads


def embed(p: NetworkParameters, x: np.ndarray, chunk: int = 4096) -> list[np.ndarray]:
    """Inference-mode embeddings for every head, computed in row chunks."""
    parts: list[list[np.ndarray]] = [[] for _ in range(p.config.n_heads)]
    for start in range(0, max(len(x), 1), chunk):
        eb = forward(p, x[start : start + chunk])
        for c in range(p.config.n_heads):
            parts[c].append(eb[c])
    return [np.concatenate(ps) if ps else np.empty((0, p.config.f_o)) for ps in parts]
