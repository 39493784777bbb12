import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clad import kernels
from conftest import unit_rows
from oracles import clad_scalar

BACKENDS = [kernels.pair_hinge_loss_py]
if kernels.pair_hinge_loss_ext is not None:
    BACKENDS.append(kernels.pair_hinge_loss_ext)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("fn", BACKENDS)
@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**16),
    B=st.integers(2, 16),
    d=st.integers(2, 5),
    q=st.sampled_from([1, 2]),
    margin=st.sampled_from([0.1, 0.5, 1.0]),
    alpha=st.sampled_from([0.2, 0.5, 0.8]),
)
def test_kernel_matches_scalar_oracle(fn, seed, B, d, q, margin, alpha):
    rng = np.random.default_rng(seed)
    z = unit_rows(rng, B, d)
    labels = rng.integers(0, 3, B)
    labels[0] = 0
    anchors = labels == 0
    loss, grad, n = fn(z, labels.astype(np.int64), anchors.astype(np.uint8), margin, q, 2 * alpha, 2 * (1 - alpha))
    # labels as given (not binarised), anchors = class-0 rows
    expected = clad_scalar(z, labels, margin, q, alpha, anchor_all=False)
    count = int(anchors.sum()) if B > 1 else 0
    assert n == count
    assert loss == pytest.approx(expected, rel=1e-12, abs=1e-14)
    assert grad.shape == z.shape


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), B=st.integers(1, 24), q=st.sampled_from([1, 2]))
def test_backends_agree(seed, B, q):
    if kernels.pair_hinge_loss_ext is None:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(seed)
    z = unit_rows(rng, B, 4)
    labels = rng.integers(0, 3, B).astype(np.int64)
    anchors = (rng.random(B) < 0.6).astype(np.uint8)
    a = kernels.pair_hinge_loss_py(z, labels, anchors, 0.7, q, 0.8, 1.2)
    b = kernels.pair_hinge_loss_ext(z, labels, anchors, 0.7, q, 0.8, 1.2)
    assert a[2] == b[2]
    assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-14)


def test_dispatcher_coerces_inputs():
    z = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]
    loss, grad, n = kernels.pair_hinge_loss(z, [0, 0, 1], [True, True, False], 1.0, 2, 1.0, 1.0)
    assert loss == 0.375
    assert n == 2
