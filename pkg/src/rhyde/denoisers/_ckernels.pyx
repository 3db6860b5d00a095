# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block matching and patch aggregation.

Must stay bit-compatible with ``_pykernels``: same candidate scan order,
same summation order, same tie rule.
"""

import numpy as np
from libc.stdint cimport int64_t


def block_match(const double[:, ::1] img, const int64_t[::1] ref_r, const int64_t[::1] ref_c,
                Py_ssize_t d, Py_ssize_t window, Py_ssize_t k_max):
    cdef Py_ssize_t rows = img.shape[0], cols = img.shape[1]
    cdef Py_ssize_t n_ref = ref_r.shape[0]
    cdef Py_ssize_t cap = k_max - 1
    members = np.full((n_ref, k_max, 2), -1, dtype=np.int64)
    counts = np.zeros(n_ref, dtype=np.int64)
    cdef int64_t[:, :, ::1] mv = members
    cdef int64_t[::1] cv = counts
    best_np = np.empty(max(cap, 1), dtype=np.float64)
    best_pos_np = np.empty((max(cap, 1), 2), dtype=np.int64)
    cdef double[::1] best = best_np
    cdef int64_t[:, ::1] best_pos = best_pos_np
    cdef Py_ssize_t t, r, c, r0, r1, c0, c1, rr, cc, i, j, nb, pos, k
    cdef double dist, diff

    with nogil:
        for t in range(n_ref):
            r = ref_r[t]
            c = ref_c[t]
            mv[t, 0, 0] = r
            mv[t, 0, 1] = c
            nb = 0
            if cap > 0:
                r0 = r - window if r > window else 0
                r1 = r + window if r + window < rows - d else rows - d
                c0 = c - window if c > window else 0
                c1 = c + window if c + window < cols - d else cols - d
                for rr in range(r0, r1 + 1):
                    for cc in range(c0, c1 + 1):
                        if rr == r and cc == c:
                            continue
                        dist = 0.0
                        for i in range(d):
                            for j in range(d):
                                diff = img[rr + i, cc + j] - img[r + i, c + j]
                                dist = dist + diff * diff
                        if nb < cap:
                            pos = nb
                            nb = nb + 1
                        elif dist < best[cap - 1]:
                            pos = cap - 1
                        else:
                            continue
                        while pos > 0 and best[pos - 1] > dist:
                            best[pos] = best[pos - 1]
                            best_pos[pos, 0] = best_pos[pos - 1, 0]
                            best_pos[pos, 1] = best_pos[pos - 1, 1]
                            pos = pos - 1
                        best[pos] = dist
                        best_pos[pos, 0] = rr
                        best_pos[pos, 1] = cc
            for k in range(nb):
                mv[t, k + 1, 0] = best_pos[k, 0]
                mv[t, k + 1, 1] = best_pos[k, 1]
            cv[t] = nb + 1
    return members, counts


def aggregate(double[:, ::1] acc, double[:, ::1] wsum, const double[:, :, ::1] est, const int64_t[:, ::1] pos):
    cdef Py_ssize_t k, i, j, r, c
    cdef Py_ssize_t d0 = est.shape[1], d1 = est.shape[2]
    with nogil:
        for k in range(est.shape[0]):
            r = pos[k, 0]
            c = pos[k, 1]
            for i in range(d0):
                for j in range(d1):
                    acc[r + i, c + j] += est[k, i, j]
                    wsum[r + i, c + j] += 1.0
