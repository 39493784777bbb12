"""Independent reference computations used as test oracles.

Deliberately naive: explicit loops, no shared code with the package beyond
calling its public forward/loss entry points for finite differences.
"""

import math

import numpy as np


def auroc_pairs(scores, positives):
    """O(P*N) pair counting with half credit for ties."""
    pos = [s for s, y in zip(scores, positives) if y]
    neg = [s for s, y in zip(scores, positives) if not y]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def fpr_scan(scores, positives, target=0.95):
    """Try every distinct score as a threshold; keep the highest one reaching the recall target."""
    scores = list(map(float, scores))
    pos = [s for s, y in zip(scores, positives) if y]
    neg = [s for s, y in zip(scores, positives) if not y]
    best = None
    for t in sorted(set(scores)):
        tpr = sum(p >= t for p in pos) / len(pos)
        if tpr >= target:
            best = t
    return sum(n >= best for n in neg) / len(neg)


def rescaled_distance(a, b):
    return (1.0 - sum(x * y for x, y in zip(a, b))) / 2.0


def clad_scalar(z, labels, margin=1.0, q=2, alpha=0.5, anchor_all=False):
    """Benign-anchored loss evaluated term by term."""
    z = [list(map(float, r)) for r in z]
    total, n = 0.0, 0
    for i in range(len(z)):
        if not anchor_all and labels[i] != 0:
            continue
        P = [j for j in range(len(z)) if j != i and (labels[j] == labels[i] if anchor_all else labels[j] == 0)]
        N = [j for j in range(len(z)) if (labels[j] != labels[i] if anchor_all else labels[j] != 0)]
        if not P and not N:
            continue
        term = 0.0
        if P:
            term += 2 * alpha * sum(rescaled_distance(z[i], z[p]) ** q for p in P) / len(P)
        if N:
            term += 2 * (1 - alpha) * sum(max(0.0, margin - rescaled_distance(z[i], z[k])) ** q for k in N) / len(N)
        total += term
        n += 1
    return total / n


def supcon_scalar(z, labels, tau):
    """Supervised contrastive loss over anchors with at least one positive."""
    total, n = 0.0, 0
    B = len(z)
    for i in range(B):
        P = [p for p in range(B) if p != i and labels[p] == labels[i]]
        if not P:
            continue
        denom = sum(math.exp(float(np.dot(z[i], z[a])) / tau) for a in range(B) if a != i)
        total += sum(-math.log(math.exp(float(np.dot(z[i], z[p])) / tau) / denom) for p in P) / len(P)
        n += 1
    return total / n


def adam_scalar_trace(grads, lr, b1=0.9, b2=0.999, eps=1e-8, x0=0.0):
    """Plain-Python Adam on a single scalar parameter."""
    x, m, v = x0, 0.0, 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
        out.append(x)
    return out


def finite_difference(f, tensors, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of every tensor (perturbed in place)."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t)
        it = np.nditer(t, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = t[idx]
            t[idx] = old + h
            fp = f()
            t[idx] = old - h
            fm = f()
            t[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Largest elementwise |a - n| / max(|a|, |n|, floor) over all tensors."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
