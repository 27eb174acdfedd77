"""Numpy implementations of the kernels in ``_core.pyx``.

Each function returns results bit-identical to its compiled counterpart:
reductions are done in the same order (per-dimension accumulation, row-order
``bincount``) so the choice of backend never changes a trajectory.
"""
import numpy as np


def nearest_centroid(X, C):
    n = X.shape[0]
    acc = np.zeros((n, C.shape[0]))
    for j in range(X.shape[1]):
        diff = X[:, j, None] - C[None, :, j]
        acc += diff * diff
    labels = np.argmin(acc, axis=1).astype(np.int64)
    return labels, acc[np.arange(n), labels]


def centroid_sums(X, labels, k):
    sums = np.empty((k, X.shape[1]))
    for j in range(X.shape[1]):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=k)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def mg_play(strategies, active, idx):
    actions = strategies[np.arange(strategies.shape[0]), active, idx]
    return actions, int(actions.sum(dtype=np.int64))


def mg_update(strategies, valuations, idx, attendance):
    valuations -= attendance * strategies[:, :, idx].astype(np.float64)
    best = np.argmax(valuations, axis=1).astype(np.int64)
    top = valuations[np.arange(valuations.shape[0]), best]
    ties = (valuations == top[:, None]).sum(axis=1).astype(np.int64)
    return best, ties
