import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage

from oracles import kmeans_brute_force
from pdequant.clusterlab import (FeatureSet, cluster, extract_features, gmm_em, kmeans_pp,
                                 within_ss, ward_linkage)
from pdequant.errors import InfeasibleKError
from pdequant.imagegrid import ImageGrid, Mask


def fs(values, weights=None):
    pts = np.asarray(values, dtype=float)
    return FeatureSet.unweighted(pts) if weights is None else FeatureSet(pts, weights)


def as_set(centroids):
    return sorted(np.round(np.asarray(centroids).ravel(), 9).tolist())


def test_feature_variants():
    img = ImageGrid(np.array([[10.0, 10.0]]))
    hist = extract_features(img, None, 5)
    assert hist.points.ravel().tolist() == [10] and hist.weights.tolist() == [2]
    cmap = extract_features(img, None, 7)
    assert cmap.points.ravel().tolist() == [10] and cmap.weights.tolist() == [1]
    img2 = ImageGrid(np.array([[10.0, 20.0]]))
    pos = extract_features(img2, Mask(np.array([[True, False]])), 2)
    assert pos.points.tolist() == [[0, 0, 10]]
    all_pos = extract_features(img2, None, 1)
    assert all_pos.points.tolist() == [[0, 0, 10], [255, 0, 20]]
    with pytest.raises(ValueError):
        extract_features(img2, None, 4)
    with pytest.raises(ValueError):
        extract_features(img2, None, 9)


def test_feature_weights_count_samples():
    rng = np.random.default_rng(0)
    img = ImageGrid(rng.integers(0, 8, (6, 7)).astype(float))
    mask = Mask(rng.random((6, 7)) < 0.5)
    for v in range(1, 9):
        f = extract_features(img, mask, v)
        assert f.dim == (3 if v <= 2 else 1)
        if v in (1, 3, 5):
            assert f.total_weight == 42
        if v in (2, 4, 6):
            assert f.total_weight == mask.count
        if v in (7, 8):
            assert np.all(f.weights == 1) and f.n == f.n_distinct()


def test_kmeans_examples():
    c = kmeans_pp(fs([0, 0, 10, 10]), 2)
    assert as_set(c.centroids) == [0, 10] and c.within_ss == 0
    c = kmeans_pp(fs([0, 2, 10, 12]), 2, n_init=5)
    assert as_set(c.centroids) == [1, 11] and c.within_ss == pytest.approx(4)
    c = kmeans_pp(fs([1, 5, 5, 9, 20]), 4)
    assert c.within_ss == 0


def test_kmeans_postconditions():
    rng = np.random.default_rng(1)
    for seed in range(10):
        f = fs(rng.normal(size=(40, 2)), rng.uniform(0.5, 3, 40))
        c = kmeans_pp(f, 4, seed=seed)
        assert np.bincount(c.labels, minlength=4).min() > 0
        assert c.within_ss == pytest.approx(within_ss(f, c.labels, c.centroids), rel=1e-6)
        for j in range(4):
            sel = c.labels == j
            mean = f.weights[sel] @ f.points[sel] / f.weights[sel].sum()
            assert np.allclose(mean, c.centroids[j], rtol=1e-9, atol=1e-12)


def test_kmeans_infeasible_k():
    with pytest.raises(InfeasibleKError):
        kmeans_pp(fs([1, 1, 2]), 3)


def test_kmeans_near_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pts = rng.uniform(0, 10, size=int(rng.integers(3, 7)))
        k = int(rng.integers(2, 4))
        if k > pts.size:
            continue
        best = kmeans_brute_force(pts, k)
        assert kmeans_pp(fs(pts), k, seed=0, n_init=20).within_ss <= best * (1 + 1e-9) + 1e-12


def test_weighted_unweighted_equivalence():
    rng = np.random.default_rng(3)
    values = rng.integers(0, 30, 200).astype(float)
    img = ImageGrid(values.reshape(10, 20))
    mask = Mask(rng.random((10, 20)) < 0.6)
    raw = extract_features(img, mask, 4)
    hist = extract_features(img, mask, 6)
    init = np.sort(hist.points[:5, 0])
    a = kmeans_pp(raw, 5, init=init)
    b = kmeans_pp(hist, 5, init=init)
    assert np.allclose(a.centroids, b.centroids, rtol=1e-12)
    assert a.within_ss == pytest.approx(b.within_ss, rel=1e-9)


def test_seeded_determinism():
    f = fs(np.random.default_rng(4).normal(size=60))
    for algo in ("kmeans", "gmm", "ward"):
        a, b = cluster(f, algo, 3, seed=9), cluster(f, algo, 3, seed=9)
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centroids, b.centroids)
    with pytest.raises(ValueError):
        cluster(f, "dbscan", 3)


def test_ward_examples():
    c = ward_linkage(fs([0, 0, 10, 10]), 2)
    assert c.labels.tolist() == [0, 0, 1, 1]
    c = ward_linkage(fs([3, 1, 4, 1.5]), 4)
    assert c.within_ss == 0 and sorted(c.labels.tolist()) == [0, 1, 2, 3]
    c = ward_linkage(fs([0, 1, 5, 6, 20]), 2)
    assert c.labels.tolist() == [0, 0, 0, 0, 1]


def _partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted(tuple(g) for g in groups.values())


def test_ward_matches_scipy():
    rng = np.random.default_rng(5)
    for _ in range(5):
        pts = rng.normal(size=(60, 2))
        ref = linkage(pts, method="ward")
        for k in (2, 4, 7):
            ours = ward_linkage(fs(pts), k)
            assert _partition(ours.labels) == _partition(fcluster(ref, k, criterion="maxclust"))
        full = ward_linkage(fs(pts), 1)
        assert np.allclose(np.sqrt(2 * np.array(full.history)), ref[:, 2])


def test_ward_permutation_invariance():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(50, 1))
    perm = rng.permutation(50)
    a = ward_linkage(fs(pts), 5)
    b = ward_linkage(fs(pts[perm]), 5)
    assert as_set(a.centroids) == as_set(b.centroids)


def test_gmm_examples():
    c = gmm_em(fs([0, 0.1, 100, 100.1]), 2)
    assert np.allclose(sorted(c.centroids.ravel()), [0.05, 100.05], atol=1e-6)
    x = np.random.default_rng(7).normal(3, 2, 100)
    w = np.random.default_rng(8).uniform(1, 2, 100)
    c = gmm_em(fs(x, w), 1)
    mean = w @ x / w.sum()
    assert c.centroids[0, 0] == pytest.approx(mean)
    assert c.variances[0, 0] == pytest.approx(w @ (x - mean) ** 2 / w.sum())
    c = gmm_em(FeatureSet(np.array([[7.0], [7.0], [7.0]]), np.ones(3)), 1, floor=1e-6)
    assert c.variances[0, 0] == 1e-6 and np.all(np.isfinite(c.history))


def test_objective_histories_monotone():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(80, 1)) * 5 + rng.integers(0, 3, (80, 1)) * 20
    f = fs(x)
    h = kmeans_pp(f, 4, seed=1).history
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(h, h[1:]))
    h = ward_linkage(f, 1).history
    assert all(b >= a - 1e-9 for a, b in zip(h, h[1:]))
    h = gmm_em(f, 3, seed=1).history
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(h, h[1:]))
