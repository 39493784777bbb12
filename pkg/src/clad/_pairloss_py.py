"""Vectorised numpy implementation of the anchor-restricted pairwise hinge loss.

Used when the compiled kernel is unavailable, and as its cross-check.
"""

import numpy as np


def pair_hinge_loss(z, labels, anchors, margin, q, w_pos, w_neg):
    """Mean over anchors of ``w_pos * mean_P d^q + w_neg * mean_N max(0, m - d)^q``.

    ``d`` is the rescaled cosine distance ``(1 - z_i . z_j) / 2``; positives
    share the anchor's label, negatives do not. Anchors with both sets empty
    are skipped. Returns ``(loss, dloss/dz, n_counted_anchors)``.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    anchors = np.asarray(anchors, dtype=bool)
    B = z.shape[0]
    grad = np.zeros_like(z)
    n_counted = int(anchors.sum()) if B > 1 else 0
    if n_counted == 0:
        return 0.0, grad, 0

    dist = (1.0 - z @ z.T) * 0.5
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    same &= anchors[:, None]
    diff &= anchors[:, None]
    n_p = same.sum(axis=1)
    n_n = diff.sum(axis=1)
    c_pos = np.divide(w_pos, n_p * n_counted, out=np.zeros(B), where=n_p > 0)
    c_neg = np.divide(w_neg, n_n * n_counted, out=np.zeros(B), where=n_n > 0)

    d_clip = np.clip(dist, 0.0, 1.0)
    hinge = np.maximum(margin - dist, 0.0)
    active = diff & (margin - dist > 0.0)
    loss = (c_pos[:, None] * np.where(same, d_clip**q, 0.0)).sum()
    loss += (c_neg[:, None] * np.where(active, hinge**q, 0.0)).sum()

    if q == 1:
        dpos = np.ones_like(dist)
        dneg = np.ones_like(dist)
    else:
        dpos = q * dist ** (q - 1)
        dneg = q * hinge ** (q - 1)
    coef = np.where(same, c_pos[:, None] * dpos, 0.0) - np.where(active, c_neg[:, None] * dneg, 0.0)
    # dL/dz = sum over pairs of coef_ij * dd_ij/dz with dd_ij/dz_i = -z_j / 2
    grad = -0.5 * (coef @ z + coef.T @ z)
    return float(loss), grad, n_counted
