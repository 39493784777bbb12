"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The end-to-end criteria share one synthetic setup: 4 blob classes (benign,
two known attacks, one held-out zero-day), 2000 rows, 20 features,
separation 6, data seed 7; models trained for 50 epochs with seeds 0-4.
"""

import json
import os
import time

import numpy as np
import pytest

from clad.cli import main
from clad.config import RunConfig
from clad.data import synth_blobs, write_csv
from clad.losses import BatchView, LossConfig, batch_loss, clad_loss
from clad.metrics import auroc, fpr_at_recall, open_set_metrics
from clad.model import backward, forward
from clad import pipeline
from conftest import random_gradcheck_case, record_criterion, unit_rows
from oracles import auroc_pairs, finite_difference, fpr_scan, max_relative_error

SEEDS = range(5)
ZERO_DAY = ["ATTACK_3"]
SETUP = dict(zero_day=ZERO_DAY, epochs=50, d_model=64, depth=3, f_o=16, base_lr=1e-3, batch_size=128)


@pytest.fixture(scope="module")
def blobs(tmp_path_factory):
    d = synth_blobs(n_classes=4, n_per_class=500, f=20, separation=6.0, zero_day_count=1, seed=7)
    assert d.metadata["zero_day_classes"] == ZERO_DAY
    path = tmp_path_factory.mktemp("accept") / "blobs.csv"
    write_csv(d, path)
    return d, path


@pytest.fixture(scope="module")
def clad_runs(blobs):
    d, path = blobs
    t0 = time.perf_counter()
    out = []
    for seed in SEEDS:
        cfg = RunConfig(data=str(path), mode="clad", seed=seed, **SETUP).validate()
        ck, _ = pipeline.run_training(cfg, d)
        out.append((ck, pipeline.run_eval(ck, d, split="test")))
    return out, time.perf_counter() - t0


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    worst = {}
    for kind in ("clad", "closr", "supcon", "bce"):
        errs = []
        for seed in range(20):
            p, x, labels, head_classes, lcfg, loss_fn = random_gradcheck_case(seed, kind)
            cfg = p.config
            assert x.shape[0] <= 16 and cfg.f <= 8 and cfg.d_model <= 8 and cfg.f_o <= 4
            eb = forward(p, x, None, training=cfg.dropout_rate > 0, dropout_seed=seed)
            _, gz = batch_loss(lcfg, eb.embeddings, labels, head_classes)
            errs.append(max_relative_error(backward(p, eb, gz), finite_difference(loss_fn, p.tensors, h=1e-5)))
        worst[kind] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    record_criterion(1, "analytic gradients match finite differences (<1e-4)", ok, detail)
    assert ok


def test_criterion_2_loss_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    ideal = []
    for _ in range(50):
        d = int(rng.integers(2, 8))
        B = int(rng.integers(3, 17))
        labels = rng.integers(0, 3, B)
        labels[:2] = [0, 1]
        mu = np.zeros(d)
        mu[rng.integers(d)] = rng.choice([-1.0, 1.0])
        z = np.where((labels == 0)[:, None], mu, -mu)
        ideal.append(clad_loss(BatchView({0: z}, labels))[0])
    rot = []
    for _ in range(50):
        d = int(rng.integers(2, 8))
        B = int(rng.integers(2, 17))
        z = unit_rows(rng, B, d)
        labels = rng.integers(0, 3, B)
        labels[0] = 0
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        rot.append(abs(clad_loss(BatchView({0: z}, labels))[0] - clad_loss(BatchView({0: z @ q}, labels))[0]))
    hand = clad_loss(BatchView({0: np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])}, [0, 0, 1]), LossConfig())[0]
    elapsed = time.perf_counter() - t0
    ok = max(ideal) == 0.0 and max(rot) <= 1e-10 and hand == 0.375 and elapsed < 10
    record_criterion(2, "loss identities", ok, f"ideal max {max(ideal)}, rotation max {max(rot):.1e}, hand batch {hand}; {elapsed:.2f}s")
    assert ok


def test_criterion_3_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    auroc_ok = True
    for _ in range(200):
        M = int(rng.integers(2, 201))
        s = rng.integers(0, int(rng.integers(2, 10)), M).astype(float)
        y = rng.random(M) < 0.5
        y[0], y[1] = True, False
        auroc_ok &= auroc(s, y) == auroc_pairs(s, y)
    worked = auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    product_err = 0.0
    for _ in range(100):
        M = int(rng.integers(4, 100))
        unknown = rng.random(M) < 0.3
        unknown[:2] = [True, False]
        s = rng.standard_normal(M)
        k = int((~unknown).sum())
        truth = rng.integers(0, 3, k)
        pred = np.where(rng.random(k) < 0.8, truth, 0)
        osa, oa = open_set_metrics(s, unknown, pred, truth)
        product_err = max(product_err, abs(oa - np.mean(pred == truth) * osa))
    fpr_ok = True
    for _ in range(100):
        M = int(rng.integers(2, 150))
        s = rng.integers(0, 20, M) / 4.0
        y = rng.random(M) < 0.5
        y[0], y[1] = True, False
        fpr_ok &= fpr_at_recall(s, y) == fpr_scan(s, y)
    elapsed = time.perf_counter() - t0
    ok = bool(auroc_ok) and worked == 0.75 and product_err <= 1e-12 and bool(fpr_ok) and elapsed < 30
    detail = f"auroc exact {bool(auroc_ok)}, worked {worked}, OpenAUC err {product_err:.1e}, fpr95 exact {bool(fpr_ok)}; {elapsed:.2f}s"
    record_criterion(3, "metric oracles", ok, detail)
    assert ok


def test_criterion_4_zero_day_end_to_end(clad_runs):
    clad_runs, elapsed = clad_runs
    known = [r.report.closed_set_mean_auroc for _, r in clad_runs]
    zero_day = [r.report.open_set_mean_auroc for _, r in clad_runs]
    mk, mz = float(np.median(known)), float(np.median(zero_day))
    ok = mk >= 0.99 and mz >= 0.95 and elapsed < 300
    detail = f"median known {mk:.4f}, zero-day {mz:.4f}; per seed zero-day {[round(v, 4) for v in zero_day]}; {elapsed:.1f}s"
    record_criterion(4, "synthetic zero-day AUROC (known >= 0.99, zero-day >= 0.95)", ok, detail)
    assert ok


def test_criterion_5_osr_ordering(blobs):
    d, path = blobs
    t0 = time.perf_counter()
    wg, ga = [], []
    for seed in SEEDS:
        cfg = RunConfig(data=str(path), mode="closr", seed=seed, **SETUP).validate()
        ck, _ = pipeline.run_training(cfg, d)
        wg.append(pipeline.run_eval(ck, d, ood_score="weighted_gaussian").report.open_set_auc)
        ga.append(pipeline.run_eval(ck, d, ood_score="gaussian").report.open_set_auc)
    elapsed = time.perf_counter() - t0
    mw, mg = float(np.median(wg)), float(np.median(ga))
    ok = mw >= mg and mw >= 0.90 and elapsed < 600
    detail = f"median weighted_gaussian {mw:.4f} vs gaussian {mg:.4f}; {elapsed:.1f}s"
    record_criterion(5, "open-set AUC weighted_gaussian >= gaussian and >= 0.90", ok, detail)
    assert ok


def test_criterion_6_margin_direction(blobs):
    d, path = blobs
    t0 = time.perf_counter()
    wins = []
    for seed in SEEDS:
        cfg = RunConfig(data=str(path), mode="clad", seed=seed, squared=True, **SETUP).validate()
        hi = pipeline.sweep_point(cfg, "margin", 1.0, d)["val_auroc_mean"]
        lo = pipeline.sweep_point(cfg, "margin", 0.1, d)["val_auroc_mean"]
        wins.append((hi, lo))
    elapsed = time.perf_counter() - t0
    n = sum(hi >= lo for hi, lo in wins)
    ok = n >= 4 and elapsed < 900
    detail = f"{n}/5 seeds; " + ", ".join(f"{hi:.4f}/{lo:.4f}" for hi, lo in wins)
    record_criterion(6, "validation AUROC margin 1.0 >= margin 0.1", ok, detail)
    assert ok


def test_criterion_7_score_bands(clad_runs):
    clad_runs, _ = clad_runs
    ok = True
    parts = []
    for _, res in clad_runs:
        table = np.array([[r[1], r[2]] for r in res.score_rows], dtype=float)
        y, s = table[:, 0].astype(int), table[:, 1]
        benign, zd, known = s[y == 0].mean(), s[y == 3].mean(), s[(y == 1) | (y == 2)].mean()
        ok &= bool(benign < zd < known)
        parts.append(f"{benign:.3f}<{zd:.3f}<{known:.3f}")
    record_criterion(7, "mean score benign < zero-day < known malicious", ok, "; ".join(parts))
    assert ok


def test_criterion_8_determinism(blobs, tmp_path):
    _, path = blobs
    flags = ["--data", str(path), "--zero-day", "ATTACK_3", "--epochs", "50", "--seed", "3", "--dropout", "0.1"]
    outs = []
    for name in ("a", "b"):
        model = tmp_path / f"{name}.ckpt"
        assert main(["train", *flags, "--out", str(model)]) == 0
        report = tmp_path / f"{name}.json"
        assert main(["eval", "--checkpoint", str(tmp_path / "a.ckpt"), "--data", str(path), "--out", str(report)]) == 0
        outs.append((model.read_bytes(), report.read_bytes()))
    same_ckpt = outs[0][0] == outs[1][0]
    same_report = outs[0][1] == outs[1][1]
    ok = same_ckpt and same_report
    record_criterion(8, "byte-identical checkpoints and reports", ok, f"checkpoints {same_ckpt}, reports {same_report}")
    assert ok


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("CLAD_FULL_CSV"), reason="set CLAD_FULL_CSV to a full-scale flow CSV export")
def test_criterion_9_full_scale(tmp_path):
    """Optional full-scale reproduction; hours of runtime.

    CLAD_FULL_CSV is the CSV path, CLAD_FULL_ZERO_DAY a comma-separated list
    of held-out classes, CLAD_FULL_CONFIG an optional ``key = value`` file
    with tuned hyperparameters.
    """
    args = ["--data", os.environ["CLAD_FULL_CSV"], "--zero-day", os.environ.get("CLAD_FULL_ZERO_DAY", "")]
    if os.environ.get("CLAD_FULL_CONFIG"):
        args += ["--config", os.environ["CLAD_FULL_CONFIG"]]
    model = tmp_path / "full.ckpt"
    assert main(["train", *args, "--out", str(model)]) == 0
    report = tmp_path / "full.json"
    assert main(["eval", "--checkpoint", str(model), "--data", os.environ["CLAD_FULL_CSV"], "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    closed, opened = rep["closed_set_mean_auroc"], rep["open_set_mean_auroc"]
    ok = closed is not None and opened is not None and closed >= 0.999 and opened >= 0.99
    record_criterion(9, "full-scale closed >= 0.999, open >= 0.99", ok, f"closed {closed}, open {opened}")
    assert ok
