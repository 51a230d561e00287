# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel for full-batch gradient descent on the free-feature
objective. Same update order as the numpy fallback; the matrix products go
through BLAS dgemm directly, with row-major arrays passed as their
column-major transposes.
"""

import numpy as np

from libc.math cimport isfinite
from scipy.linalg.cython_blas cimport dgemm

BACKEND_NAME = "compiled"


def run_gd_chunk(double[:, ::1] w, double[:, ::1] h, double[::1] b,
                 const double[:, ::1] y, double lambda_h, double lambda_w,
                 double lr, int steps, double loss_cap):
    """Advance (w, h, b) in place by up to ``steps`` descent steps.

    Returns (taken, diverged, last_loss); see the numpy backend for the
    exact semantics.
    """
    cdef int n = y.shape[0]
    cdef int m = y.shape[1]
    cdef int d = h.shape[0]
    if w.shape[0] != n or w.shape[1] != d or h.shape[1] != m or b.shape[0] != n:
        raise ValueError("inconsistent shapes for the descent kernel")

    e_arr = np.empty((n, m), dtype=np.float64)
    gw_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] e = e_arr
    cdef double[:, ::1] gw = gw_arr

    cdef double h_keep = 1.0 - lr * lambda_h / m
    cdef double w_keep = 1.0 - lr * lambda_w
    cdef double inv_m = 1.0 / m
    cdef double neg_lr_over_m = -lr / m
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef double loss = float("nan")
    cdef double acc, row_sum
    cdef char no_trans = b'N'
    cdef char trans = b'T'
    cdef int t, i, j, taken = steps
    cdef bint diverged = False

    with nogil:
        for t in range(steps):
            # E = b 1^T - Y, then E += W H via dgemm.
            for i in range(n):
                for j in range(m):
                    e[i, j] = b[i] - y[i, j]
            # Row-major E(n,m) += W(n,d) @ H(d,m): column-major
            # E^T(m,n) += H^T(m,d) @ W^T(d,n).
            dgemm(&no_trans, &no_trans, &m, &n, &d, &one,
                  &h[0, 0], &m, &w[0, 0], &d, &one, &e[0, 0], &m)

            acc = 0.0
            for i in range(n):
                for j in range(m):
                    acc += e[i, j] * e[i, j]
            loss = 0.5 * inv_m * acc
            acc = 0.0
            for i in range(d):
                for j in range(m):
                    acc += h[i, j] * h[i, j]
            loss += 0.5 * lambda_h * inv_m * acc
            acc = 0.0
            for i in range(n):
                for j in range(d):
                    acc += w[i, j] * w[i, j]
            loss += 0.5 * lambda_w * acc
            if not isfinite(loss) or loss > loss_cap:
                taken = t
                diverged = True
                break

            # GW = (1/M) E(n,m) @ H^T(m,d): column-major
            # GW^T(d,n) = H(d,m) @ E^T(m,n), H passed transposed.
            dgemm(&trans, &no_trans, &d, &n, &m, &inv_m,
                  &h[0, 0], &m, &e[0, 0], &m, &zero, &gw[0, 0], &d)

            # H = h_keep H - (lr/M) W^T(d,n) @ E(n,m), with W still the old
            # decoder: column-major H^T(m,d) = h_keep H^T + alpha E^T @ W.
            dgemm(&no_trans, &trans, &m, &d, &n, &neg_lr_over_m,
                  &e[0, 0], &m, &w[0, 0], &d, &h_keep, &h[0, 0], &m)

            for i in range(n):
                row_sum = 0.0
                for j in range(d):
                    w[i, j] = w_keep * w[i, j] - lr * gw[i, j]
                for j in range(m):
                    row_sum += e[i, j]
                b[i] -= lr * inv_m * row_sum

    return taken, bool(diverged), loss
