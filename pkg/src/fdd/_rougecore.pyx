# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ROUGE-L kernel: pairwise LCS-based F1 over CSR-packed token ids.

The pairwise loop is the one hot path in the audit (O(m*n*L1*L2) cell
updates); everything else in the package stays in Python. _rougepy.py is
the behavior-identical fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef int _lcs(const int* a, Py_ssize_t la, const int* b, Py_ssize_t lb, int* row) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef int diag, up, left, cur
    for j in range(lb + 1):
        row[j] = 0
    for i in range(la):
        diag = 0
        for j in range(1, lb + 1):
            up = row[j]
            if a[i] == b[j - 1]:
                cur = diag + 1
            else:
                left = row[j - 1]
                cur = left if left > up else up
            diag = up
            row[j] = cur
    return row[lb]


def pair_scores(const int[::1] gen_flat, const long long[::1] gen_off,
                const int[::1] test_flat, const long long[::1] test_off):
    """F1 matrix for every (generated, test) document pair."""
    cdef Py_ssize_t m = gen_off.shape[0] - 1
    cdef Py_ssize_t n = test_off.shape[0] - 1
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] ov = out

    cdef Py_ssize_t i, j, la, lb
    cdef Py_ssize_t max_lb = 0
    for j in range(n):
        lb = test_off[j + 1] - test_off[j]
        if lb > max_lb:
            max_lb = lb
    row_arr = np.zeros(max_lb + 1, dtype=np.intc)
    cdef int[::1] row = row_arr

    cdef int lcs
    cdef double p, r
    with nogil:
        for i in range(m):
            la = gen_off[i + 1] - gen_off[i]
            for j in range(n):
                lb = test_off[j + 1] - test_off[j]
                if la == 0 or lb == 0:
                    continue
                lcs = _lcs(&gen_flat[gen_off[i]], la, &test_flat[test_off[j]], lb, &row[0])
                if lcs == 0:
                    continue
                p = (<double> lcs) / lb
                r = (<double> lcs) / la
                ov[i, j] = 2.0 * p * r / (p + r)
    return out
