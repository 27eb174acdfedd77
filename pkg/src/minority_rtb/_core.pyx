# cython: language_level=3
"""Compiled inner loops. Must stay bit-identical to ``_pycore``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def nearest_centroid(const double[:, ::1] X, const double[:, ::1] C):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k = C.shape[0]
    cdef Py_ssize_t i, j, c, best
    cdef double acc, diff, best_d
    labels_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] dist = dist_arr
    for i in range(n):
        best = 0
        best_d = 0.0
        for c in range(k):
            acc = 0.0
            for j in range(d):
                diff = X[i, j] - C[c, j]
                acc = acc + diff * diff
            if c == 0 or acc < best_d:
                best = c
                best_d = acc
        labels[i] = best
        dist[i] = best_d
    return labels_arr, dist_arr


def centroid_sums(const double[:, ::1] X, const long long[::1] labels, Py_ssize_t k):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, c
    sums_arr = np.zeros((k, d), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for j in range(d):
            sums[c, j] = sums[c, j] + X[i, j]
    return sums_arr, counts_arr


def mg_play(const signed char[:, :, ::1] strategies, const long long[::1] active, Py_ssize_t idx):
    cdef Py_ssize_t n = strategies.shape[0], i
    cdef long long total = 0
    actions_arr = np.empty(n, dtype=np.int8)
    cdef signed char[::1] actions = actions_arr
    for i in range(n):
        actions[i] = strategies[i, active[i], idx]
        total += actions[i]
    return actions_arr, total


def mg_update(const signed char[:, :, ::1] strategies, double[:, ::1] valuations,
              Py_ssize_t idx, double attendance):
    cdef Py_ssize_t n = strategies.shape[0], s = strategies.shape[1]
    cdef Py_ssize_t i, a, best
    cdef long long ties
    cdef double v, top
    best_arr = np.empty(n, dtype=np.int64)
    ties_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] best_out = best_arr
    cdef long long[::1] ties_out = ties_arr
    for i in range(n):
        for a in range(s):
            valuations[i, a] = valuations[i, a] - attendance * <double>strategies[i, a, idx]
        best = 0
        top = valuations[i, 0]
        ties = 1
        for a in range(1, s):
            v = valuations[i, a]
            if v > top:
                top = v
                best = a
                ties = 1
            elif v == top:
                ties += 1
        best_out[i] = best
        ties_out[i] = ties
    return best_arr, ties_arr
