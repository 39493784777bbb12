import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clad import LossConfig, ModelConfig, forward, init_network  # noqa: E402
from clad.losses import batch_loss  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_rows(rng, n, d):
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_gradcheck_case(seed: int, kind: str):
    """A small (config, batch, loss) triple for gradient checking."""
    rng = np.random.default_rng(seed)
    f = int(rng.integers(2, 9))
    n_classes = 3
    B = int(rng.integers(6, 17))
    labels = rng.integers(0, n_classes, B)
    labels[:2] = [0, 1]
    head_classes = tuple(range(n_classes)) if kind == "closr" else (0,)
    if kind == "bce":
        mcfg = ModelConfig(f, int(rng.integers(2, 9)), int(rng.integers(1, 3)), 1, 1, 0.0, seed, normalize=False)
    else:
        mcfg = ModelConfig(
            f,
            int(rng.integers(2, 9)),
            int(rng.integers(1, 3)),
            int(rng.integers(2, 5)),
            len(head_classes),
            float(rng.choice([0.0, 0.3])),
            seed,
        )
    lcfg = LossConfig(
        kind,
        margin=float(rng.choice([1.0, 0.6])),
        squared=bool(rng.integers(0, 2)),
        alpha=float(rng.choice([0.5, 0.3])),
        temperature=float(rng.choice([0.5, 1.0])),
    )
    p = init_network(mcfg)
    for t in p.tensors:
        t += 0.1 * rng.standard_normal(t.shape)
    x = rng.standard_normal((B, f))

    def loss_fn():
        eb = forward(p, x, None, training=mcfg.dropout_rate > 0, dropout_seed=seed)
        return batch_loss(lcfg, eb.embeddings, labels, head_classes)[0]

    return p, x, labels, head_classes, lcfg, loss_fn


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {name}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
