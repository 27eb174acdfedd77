"""Minority detection on landscape data.

Two-means clustering over (bid, imps_hour), selection of the high-impression
"winning" cluster, bid-variance scaling across impression bins and per-cluster
skewness of bids.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ContractError, DegenerateInputError
from .landscape import describe

FEATURES = ("bid", "imps_hour")


@dataclass
class FeatureMatrix:
    """Raw feature values plus the optional standardization applied to them."""

    raw: np.ndarray
    names: tuple = FEATURES
    mean: np.ndarray | None = None
    sd: np.ndarray | None = None

    @classmethod
    def from_dataset(cls, dataset, names=FEATURES, standardize=True):
        raw = np.column_stack([dataset.columns[c].astype(np.float64) for c in names])
        return cls.build(raw, names, standardize)

    @classmethod
    def build(cls, raw, names=None, standardize=True):
        raw = np.ascontiguousarray(raw, dtype=np.float64)
        if raw.ndim != 2:
            raise ContractError("feature matrix must be two-dimensional")
        names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(raw.shape[1]))
        if not standardize:
            return cls(raw, names)
        mean = raw.mean(axis=0)
        sd = raw.std(axis=0, ddof=1) if raw.shape[0] > 1 else np.zeros(raw.shape[1])
        flat = [n for n, s in zip(names, sd) if not s > 0]
        if flat:
            raise DegenerateInputError(f"cannot standardize constant column(s): {', '.join(flat)}")
        return cls(raw, names, mean, sd)

    @property
    def standardized(self):
        return self.mean is not None

    @property
    def values(self):
        """Coordinates the clustering runs in."""
        if not self.standardized:
            return self.raw
        return np.ascontiguousarray((self.raw - self.mean) / self.sd)

    def to_raw(self, points):
        points = np.asarray(points, dtype=np.float64)
        if not self.standardized:
            return points.copy()
        return points * self.sd + self.mean

    def __len__(self):
        return self.raw.shape[0]


@dataclass
class ClusterResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray  # raw units
    centroids_fit: np.ndarray  # clustering-space units
    sizes: np.ndarray
    inertia: float
    inertia_history: list
    iterations: int
    converged: bool
    mean_imps_hour: np.ndarray | None = None
    mean_imps_day: np.ndarray | None = None
    feature_names: tuple = FEATURES
    standardized: bool = True

    def cluster_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cluster", "size", "mean_imps_hour", "mean_imps_day"])
        for c in range(self.k):
            w.writerow([
                c,
                int(self.sizes[c]),
                _num(None if self.mean_imps_hour is None else self.mean_imps_hour[c]),
                _num(None if self.mean_imps_day is None else self.mean_imps_day[c]),
            ])
        return buf.getvalue()


def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NaN"
    return f"{float(v):.6f}"


def _plus_plus(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    _, d = _backend.nearest_centroid(X, centers[:1])
    for c in range(1, k):
        cum = np.cumsum(d)
        total = cum[-1]
        if not total > 0:
            raise DegenerateInputError(f"fewer than k={k} distinct rows; cannot place distinct centroids")
        pick = int(np.searchsorted(cum, rng.random() * total, side="right"))
        centers[c] = X[min(pick, n - 1)]
        _, d = _backend.nearest_centroid(X, centers[: c + 1])
    return centers


def kmeans(features, k=2, seed=0, max_iter=300, tol=1e-8):
    """Lloyd's algorithm from a k-means++ start.

    Stops when no centroid moves by ``tol`` or more (Euclidean, clustering
    space) or after ``max_iter`` updates. An emptied cluster is re-seeded at
    the point currently farthest from its own centroid.
    """
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix.build(features, standardize=False)
    X = features.values
    n = X.shape[0]
    if k < 1:
        raise ContractError(f"k must be positive, got {k}")
    if n < k:
        raise ContractError(f"need at least k={k} rows, got {n}")
    if k >= 2 and np.all(X == X[0]):
        raise DegenerateInputError("all rows are identical; k >= 2 clusters are undefined")

    rng = np.random.default_rng(int(seed))
    C = _plus_plus(X, k, rng)
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, d = _backend.nearest_centroid(X, C)
        history.append(math.fsum(d))
        sums, counts = _backend.centroid_sums(X, labels, k)
        new = C.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            d = d.copy()
            for c in np.flatnonzero(~filled):
                far = int(np.argmax(d))
                new[c] = X[far]
                d[far] = -1.0
        shift = float(np.sqrt(((new - C) ** 2).sum(axis=1)).max())
        C = new
        if shift < tol:
            converged = True
            break
    labels, d = _backend.nearest_centroid(X, C)
    inertia = math.fsum(d)
    history.append(inertia)
    return ClusterResult(
        k=k,
        assignments=labels,
        centroids=features.to_raw(C),
        centroids_fit=C,
        sizes=np.bincount(labels, minlength=k),
        inertia=inertia,
        inertia_history=history,
        iterations=iterations,
        converged=converged,
        feature_names=features.names,
        standardized=features.standardized,
    )


def cluster_dataset(dataset, k=2, seed=0, standardize=True, max_iter=300, tol=1e-8):
    """Cluster a landscape on (bid, imps_hour) and attach impression means."""
    if len(dataset) == 0:
        raise ContractError("empty dataset")
    feats = FeatureMatrix.from_dataset(dataset, FEATURES, standardize)
    result = kmeans(feats, k, seed, max_iter, tol)
    result.mean_imps_hour = _group_means(dataset.columns["imps_hour"], result.assignments, k)
    result.mean_imps_day = _group_means(dataset.columns["imps_day"], result.assignments, k)
    return result


def _group_means(values, labels, k):
    sums = np.bincount(labels, weights=values.astype(np.float64), minlength=k)
    counts = np.bincount(labels, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def adjusted_rand_index(labels_a, labels_b):
    """Hubert-Arabie ARI from the contingency table."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("label arrays must be one-dimensional and equally long")
    n = a.size
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        x = np.asarray(x, dtype=np.float64)
        return float(np.sum(x * (x - 1) / 2))

    index = pairs(table)
    row = pairs(table.sum(axis=1))
    col = pairs(table.sum(axis=0))
    expected = row * col / (n * (n - 1) / 2)
    top = (row + col) / 2
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


@dataclass(frozen=True)
class MinorityCluster:
    cluster: int | None
    label: str
    rationale: dict


def identify_minority_cluster(result):
    """Pick the cluster with the strictly larger mean hourly impressions."""
    if result.k != 2:
        raise ContractError(f"minority identification needs k=2, got k={result.k}")
    if result.mean_imps_hour is None:
        raise ContractError("cluster result carries no imps_hour means")
    m = [float(x) for x in result.mean_imps_hour]
    rationale = {
        "rule": "cluster with strictly greater mean imps_hour",
        "mean_imps_hour": m,
        "sizes": [int(s) for s in result.sizes],
    }
    if m[0] == m[1] or any(math.isnan(x) for x in m):
        return MinorityCluster(None, "unresolved", {**rationale, "reason": "equal or undefined means"})
    winner = 0 if m[0] > m[1] else 1
    return MinorityCluster(winner, "minority (winning)", rationale)


@dataclass
class VarianceScalingReport:
    edges: np.ndarray
    counts: np.ndarray
    variances: np.ndarray
    means: np.ndarray
    mode: str
    requested_bins: int
    assignments: np.ndarray = field(repr=False, default=None)

    @property
    def effective_bins(self):
        return self.counts.size

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "low_edge", "high_edge", "count", "bid_variance"])
        for b in range(self.effective_bins):
            w.writerow([b, _num(self.edges[b]), _num(self.edges[b + 1]), int(self.counts[b]), _num(self.variances[b])])
        return buf.getvalue()

    def to_json(self):
        return {
            "mode": self.mode,
            "requested_bins": self.requested_bins,
            "effective_bins": self.effective_bins,
            "edges": [float(e) for e in self.edges],
            "counts": [int(c) for c in self.counts],
            "bid_variance": [None if math.isnan(v) else float(v) for v in self.variances],
            "bid_mean": [None if math.isnan(v) else float(v) for v in self.means],
            "variance_convention": "sample variance (n-1); NaN for bins with fewer than 2 rows",
            "bin_rule": "bin b holds low_edge <= imps_hour < high_edge; the last bin is closed",
        }


def bin_edges(x, num_bins, mode="quantile"):
    x = np.asarray(x, dtype=np.float64)
    if mode == "quantile":
        edges = np.quantile(x, np.linspace(0.0, 1.0, num_bins + 1))
    elif mode == "equal_width":
        edges = np.linspace(x.min(), x.max(), num_bins + 1)
    else:
        raise ContractError(f"unknown binning mode {mode!r}")
    edges = np.unique(edges)
    if edges.size == 1:
        edges = np.array([edges[0], edges[0]])
    return edges


def variance_scaling(dataset, num_bins=6, mode="quantile"):
    """Sample variance of bid within bins of imps_hour.

    Quantile edges that coincide (heavy ties in imps_hour) are merged, so the
    report may hold fewer bins than requested; see ``effective_bins``.
    """
    if len(dataset) == 0:
        raise ContractError("empty dataset")
    if num_bins < 1:
        raise ContractError(f"num_bins must be >= 1, got {num_bins}")
    imps = dataset.columns["imps_hour"].astype(np.float64)
    bid = dataset.columns["bid"]
    edges = bin_edges(imps, num_bins, mode)
    nb = edges.size - 1
    idx = np.clip(np.searchsorted(edges, imps, side="right") - 1, 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    variances = np.full(nb, np.nan)
    means = np.full(nb, np.nan)
    for b in range(nb):
        v = bid[idx == b]
        if v.size:
            means[b] = v.mean()
        if v.size > 1:
            variances[b] = v.var(ddof=1)
    return VarianceScalingReport(edges, counts, variances, means, mode, num_bins, idx)


@dataclass(frozen=True)
class SkewReport:
    skew: tuple
    median: tuple
    minority_cluster: int | None
    verdict: str
    rule: str = "minority cluster has the lower median bid and positive bid skew"


def cluster_skewness(dataset, result):
    """Per-cluster bid skewness and whether minority bids sit at low levels."""
    if result.k != 2:
        raise ContractError(f"needs a k=2 clustering, got k={result.k}")
    if len(result.assignments) != len(dataset):
        raise ContractError("cluster assignments are not aligned with the dataset rows")
    bid = dataset.columns["bid"]
    skews, medians = [], []
    for c in range(2):
        v = bid[result.assignments == c]
        medians.append(float(np.median(v)) if v.size else math.nan)
        skews.append(describe(v).skew if v.size >= 3 else math.nan)
    minority = identify_minority_cluster(result).cluster
    if minority is None:
        verdict = "unresolved"
    else:
        other = 1 - minority
        ok = medians[minority] < medians[other] and skews[minority] > 0
        verdict = "consistent" if ok else "not consistent"
    return SkewReport(tuple(skews), tuple(medians), minority, verdict)


def scatter_csv(dataset, result=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bid", "imps_hour", "cluster"])
    labels = result.assignments.tolist() if result is not None else [""] * len(dataset)
    for b, h, c in zip(dataset.columns["bid"].tolist(), dataset.columns["imps_hour"].tolist(), labels):
        w.writerow([repr(b), h, c])
    return buf.getvalue()


def per_ad_series(dataset):
    """``{adid: (bids, imps_hour)}`` sorted by bid, one series per ad."""
    ads = dataset.columns["adid_anonymized"]
    out = {}
    for ad in np.unique(ads):
        m = ads == ad
        order = np.argsort(dataset.columns["bid"][m], kind="stable")
        out[int(ad)] = (dataset.columns["bid"][m][order], dataset.columns["imps_hour"][m][order])
    return out
