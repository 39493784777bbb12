# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused anchor-restricted pairwise hinge loss and its gradient.

Same contract as clad._pairloss_py.pair_hinge_loss; loops over anchor pairs
without materialising B x B temporaries.
"""

import numpy as np

from libc.math cimport pow


cdef inline double _powq(double v, int q) nogil:
    if q == 1:
        return v
    if q == 2:
        return v * v
    return pow(v, q)


def pair_hinge_loss(
    const double[:, ::1] z,
    const long long[::1] labels,
    const unsigned char[::1] anchors,
    double margin,
    int q,
    double w_pos,
    double w_neg,
):
    cdef Py_ssize_t B = z.shape[0]
    cdef Py_ssize_t F = z.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double dot, d, dv, h, dterm, c_pos, c_neg, total = 0.0
    cdef long long n_p, n_n
    cdef Py_ssize_t n_counted = 0

    grad_arr = np.zeros((B, F), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr

    for i in range(B):
        if anchors[i] and B > 1:
            n_counted += 1
    if n_counted == 0:
        return 0.0, grad_arr, 0

    with nogil:
        for i in range(B):
            if not anchors[i]:
                continue
            n_p = 0
            n_n = 0
            for j in range(B):
                if j == i:
                    continue
                if labels[j] == labels[i]:
                    n_p += 1
                else:
                    n_n += 1
            if n_p + n_n == 0:
                continue
            c_pos = w_pos / (n_p * n_counted) if n_p > 0 else 0.0
            c_neg = w_neg / (n_n * n_counted) if n_n > 0 else 0.0
            for j in range(B):
                if j == i:
                    continue
                dot = 0.0
                for k in range(F):
                    dot += z[i, k] * z[j, k]
                d = (1.0 - dot) * 0.5
                if labels[j] == labels[i]:
                    dv = d if d > 0.0 else 0.0
                    if dv > 1.0:
                        dv = 1.0
                    total += c_pos * _powq(dv, q)
                    dterm = c_pos * (q * _powq(d, q - 1) if q > 1 else 1.0)
                else:
                    h = margin - d
                    if h <= 0.0:
                        continue
                    total += c_neg * _powq(h, q)
                    dterm = -c_neg * (q * _powq(h, q - 1) if q > 1 else 1.0)
                # dd/dz_i = -z_j / 2, dd/dz_j = -z_i / 2
                for k in range(F):
                    grad[i, k] -= 0.5 * dterm * z[j, k]
                    grad[j, k] -= 0.5 * dterm * z[i, k]
    return total, grad_arr, n_counted
