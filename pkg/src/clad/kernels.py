"""Kernel backend selection.

The compiled ``_pairloss`` extension is used when it imports; set
``CLAD_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from clad import _pairloss_py

pair_hinge_loss_py = _pairloss_py.pair_hinge_loss

try:
    if os.environ.get("CLAD_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from clad._pairloss import pair_hinge_loss as pair_hinge_loss_ext
except ImportError:
    pair_hinge_loss_ext = None

BACKEND = "cython" if pair_hinge_loss_ext is not None else "python"


def pair_hinge_loss(z, labels, anchors, margin, q, w_pos, w_neg):
    """Dispatch to the selected backend; inputs are coerced to its dtypes."""
    if pair_hinge_loss_ext is None:
        return pair_hinge_loss_py(z, labels, anchors, margin, q, w_pos, w_neg)
    return pair_hinge_loss_ext(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int64),
        np.ascontiguousarray(anchors, dtype=np.uint8),
        float(margin),
        int(q),
        float(w_pos),
        float(w_neg),
    )
