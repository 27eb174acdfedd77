import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minority_rtb import analytics as an
from minority_rtb import landscape as ls
from minority_rtb.errors import ContractError, DegenerateInputError


def dataset_from(bid, imps_hour, imps_day=None):
    n = len(bid)
    imps_hour = np.asarray(imps_hour, dtype=np.int64)
    day = imps_hour if imps_day is None else np.asarray(imps_day, dtype=np.int64)
    cols = {c: np.ones(n, dtype=np.int64) for c in ls.COLUMNS}
    cols.update(date=np.full(n, 43082), hour=np.full(n, 13), bid=np.asarray(bid, dtype=float), imps_hour=imps_hour)
    for h in ls.HORIZONS[1:]:
        cols[h] = day
    return ls.LandscapeDataset(cols)


def ari_oracle(a, b):
    """Pair-counting definition, O(n^2), no contingency table."""
    n = len(a)
    same_a = same_b = both = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa, sb = a[i] == a[j], b[i] == b[j]
            same_a += sa
            same_b += sb
            both += sa and sb
    total = n * (n - 1) / 2
    expected = same_a * same_b / total
    top = (same_a + same_b) / 2
    return 1.0 if top == expected else (both - expected) / (top - expected)


# --- k-means ----------------------------------------------------------------------------

def test_separated_pair():
    res = an.kmeans(np.array([[0.0, 0.0], [10.0, 10.0]]), k=2, seed=1)
    assert sorted(res.sizes.tolist()) == [1, 1]
    assert res.inertia == 0.0


def test_single_cluster_closed_form(rng):
    X = rng.normal(size=(300, 3))
    res = an.kmeans(X, k=1)
    np.testing.assert_allclose(res.centroids[0], X.mean(axis=0), rtol=0, atol=1e-12)
    assert res.inertia == pytest.approx(X.var(axis=0).sum() * 300, rel=1e-12)


def test_gaussian_blobs_recovered(rng):
    truth = np.repeat([0, 1], 1000)
    X = rng.normal(size=(2000, 2)) + np.where(truth[:, None] == 1, 10.0, 0.0) * np.array([1.0, 0.0])
    res = an.kmeans(an.FeatureMatrix.build(X), k=2, seed=3)
    assert an.adjusted_rand_index(truth, res.assignments) >= 0.99


def test_too_few_rows():
    with pytest.raises(ContractError):
        an.kmeans(np.zeros((1, 2)), k=2)


def test_identical_rows():
    with pytest.raises(DegenerateInputError, match="identical"):
        an.kmeans(np.ones((10, 2)), k=2)


def test_standardizing_constant_column():
    with pytest.raises(DegenerateInputError, match="x1"):
        an.FeatureMatrix.build(np.column_stack([np.arange(5.0), np.ones(5)]))


def test_fewer_distinct_rows_than_k():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    with pytest.raises(DegenerateInputError):
        an.kmeans(X, k=3)


def test_standardization_round_trip(rng):
    raw = rng.normal([5.0, 100.0], [2.0, 30.0], size=(200, 2))
    fm = an.FeatureMatrix.build(raw)
    z = fm.values
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0, ddof=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(fm.to_raw(z), raw, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 5))
def test_lloyd_properties(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 2)) * rng.uniform(0.5, 3.0, size=2)
    res = an.kmeans(X, k=k, seed=seed)
    hist = res.inertia_history
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(hist, hist[1:]))
    # every point sits at its nearest centroid
    d = ((X[:, None, :] - res.centroids_fit[None]) ** 2).sum(axis=2)
    assert np.all(d[np.arange(120), res.assignments] <= d.min(axis=1) + 1e-12)
    assert res.sizes.sum() == 120
    if res.converged:
        # centroids are the means of their members
        for c in range(k):
            members = X[res.assignments == c]
            if len(members):
                np.testing.assert_allclose(res.centroids_fit[c], members.mean(axis=0), atol=1e-7)


def test_kmeans_deterministic(rng):
    X = rng.normal(size=(500, 2))
    a = an.kmeans(X, k=3, seed=9)
    b = an.kmeans(X, k=3, seed=9)
    assert np.array_equal(a.assignments, b.assignments) and a.inertia == b.inertia


# --- ARI ---------------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=2, max_size=40))
def test_ari_against_pair_counting(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    assert an.adjusted_rand_index(a, b) == pytest.approx(ari_oracle(a, b), abs=1e-12)


def test_ari_against_sklearn(rng):
    sk = pytest.importorskip("sklearn.metrics")
    a = rng.integers(0, 4, size=3000)
    b = np.where(rng.random(3000) < 0.7, a, rng.integers(0, 5, size=3000))
    assert an.adjusted_rand_index(a, b) == pytest.approx(sk.adjusted_rand_score(a, b), abs=1e-12)


def test_ari_label_permutation():
    a = [0, 0, 1, 1, 2]
    assert an.adjusted_rand_index(a, [5, 5, 3, 3, 9]) == 1.0


# --- minority identification ---------------------------------------------------------------

def fake_result(means, k=2):
    return an.ClusterResult(
        k=k, assignments=np.zeros(1, int), centroids=np.zeros((k, 2)), centroids_fit=np.zeros((k, 2)),
        sizes=np.ones(k, int), inertia=0.0, inertia_history=[], iterations=1, converged=True,
        mean_imps_hour=np.asarray(means, dtype=float),
    )


@pytest.mark.parametrize("means,cluster", [((74.25, 23.88), 0), ((1, 2), 1), ((5, 5), None)])
def test_identify(means, cluster):
    found = an.identify_minority_cluster(fake_result(means))
    assert found.cluster == cluster
    assert found.label == ("unresolved" if cluster is None else "minority (winning)")


def test_identify_needs_two_clusters():
    with pytest.raises(ContractError):
        an.identify_minority_cluster(fake_result((1, 2, 3), k=3))


def test_two_regime_clustering():
    ds = ls.synth_generate(ls.GenConfig(model="two_regime", full_grid=False, num_rows=20_000, seed=5))
    res = an.cluster_dataset(ds, k=2, seed=9)
    assert an.adjusted_rand_index(ds.labels, res.assignments) >= 0.95
    found = an.identify_minority_cluster(res)
    assert res.mean_imps_hour[found.cluster] == pytest.approx(74.25, abs=1.0)
    assert len(res.cluster_csv().splitlines()) == 3


# --- variance scaling ---------------------------------------------------------------------

def test_constant_bid_gives_zero_variances(rng):
    ds = dataset_from(np.full(600, 7.5), rng.integers(0, 100, size=600))
    rep = an.variance_scaling(ds, 6)
    assert np.all(rep.variances == 0)


def test_variance_against_two_pass_oracle(rng):
    imps = rng.integers(0, 10_000, size=5000)
    bid = np.round(rng.uniform(0.1, 49.9, size=5000), 1)
    rep = an.variance_scaling(dataset_from(bid, imps), 5, mode="equal_width")
    assert rep.effective_bins == 5
    for b in range(5):
        lo, hi = rep.edges[b], rep.edges[b + 1]
        sel = (imps >= lo) & ((imps < hi) if b < 4 else (imps <= hi))
        xs = bid[sel].tolist()
        m = math.fsum(xs) / len(xs)
        want = math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)
        assert rep.counts[b] == len(xs)
        assert rep.variances[b] == pytest.approx(want, rel=1e-10)


def test_quantile_edges_collapse(rng):
    ds = dataset_from(rng.uniform(1, 10, size=100), np.repeat([1, 2], 50))
    rep = an.variance_scaling(ds, 6)
    assert rep.requested_bins == 6 and rep.effective_bins < 6
    assert rep.counts.sum() == 100


def test_heteroscedastic_schedule_recovered():
    cfg = ls.GenConfig(model="heteroscedastic", full_grid=False, num_rows=60_000, seed=3)
    rep = an.variance_scaling(ls.synth_generate(cfg), 6)
    assert rep.effective_bins == 6
    for got, want in zip(rep.variances, cfg.variance_schedule):
        assert abs(got - want) / want < 0.05
    assert np.all(np.diff(rep.variances) < 0)
    assert len(rep.to_csv().splitlines()) == 7


# --- skewness ---------------------------------------------------------------------------

def test_symmetric_grid_cluster_has_zero_skew():
    bid = np.tile(ls.GRID, 2)
    labels = np.repeat([0, 1], 499)
    ds = dataset_from(bid, np.where(labels == 0, 50, 10))
    res = fake_result((50.0, 10.0))
    res.assignments = labels
    rep = an.cluster_skewness(ds, res)
    assert abs(rep.skew[0]) < 1e-12 and abs(rep.skew[1]) < 1e-12


def test_exponential_bids_skew_positive(rng):
    bid = np.clip(np.round(rng.exponential(4.0, size=2000) + 0.1, 1), 0.1, 49.9)
    low = np.round(rng.uniform(25, 49.9, size=2000), 1)
    ds = dataset_from(np.concatenate([bid, low]), np.repeat([70, 20], 2000))
    res = fake_result((70.0, 20.0))
    res.assignments = np.repeat([0, 1], 2000)
    rep = an.cluster_skewness(ds, res)
    assert rep.skew[0] > 0
    assert rep.verdict == "consistent"


def test_disjoint_supports_order_medians():
    ds = ls.synth_generate(ls.GenConfig(model="two_regime", num_ads=4, seed=2))
    res = an.cluster_dataset(ds, k=2, seed=1)
    rep = an.cluster_skewness(ds, res)
    low = int(np.argmin(rep.median))
    assert res.centroids[low, 0] < 25 < res.centroids[1 - low, 0]
    assert rep.median[low] < rep.median[1 - low]


def test_tiny_cluster_skew_undefined():
    ds = dataset_from([1.0, 2.0, 30.0, 31.0, 32.0], [9, 9, 1, 1, 1])
    res = fake_result((9.0, 1.0))
    res.assignments = np.array([0, 0, 1, 1, 1])
    rep = an.cluster_skewness(ds, res)
    assert math.isnan(rep.skew[0])


def test_per_ad_series_sorted():
    ds = ls.synth_generate(ls.GenConfig(model="supply_curve", full_grid=False, num_rows=300, num_ads=3, seed=1))
    series = an.per_ad_series(ds)
    assert set(series) <= {1, 2, 3}
    assert sum(len(b) for b, _ in series.values()) == 300
    for bids, _ in series.values():
        assert np.all(np.diff(bids) >= 0)


def test_clustering_invariant_under_row_order():
    ds = ls.synth_generate(ls.GenConfig(model="two_regime", full_grid=False, num_rows=8000, seed=12))
    perm = np.random.default_rng(1).permutation(len(ds))
    a = an.cluster_dataset(ds, k=2, seed=3)
    b = an.cluster_dataset(ds.take(perm), k=2, seed=3)
    assert sorted(a.sizes.tolist()) == sorted(b.sizes.tolist())
    np.testing.assert_allclose(sorted(a.mean_imps_hour), sorted(b.mean_imps_hour), rtol=1e-12)
    # same partition once rows are put back in their original order
    back = np.empty_like(b.assignments)
    back[perm] = b.assignments
    assert an.adjusted_rand_index(a.assignments, back) == 1.0
