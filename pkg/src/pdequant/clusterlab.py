"""Feature extraction from image/mask data and the three clustering families.

Feature variants:

    1  position and value of all image pixels
    2  position and value of all mask pixels
    3  grey values of all image pixels
    4  grey values of all mask pixels
    5  histogram of all image pixels (weight = frequency)
    6  histogram of all mask pixels
    7  colour map of all image pixels (distinct values, weight 1)
    8  colour map of all mask pixels

Positions are mapped affinely onto [0, 255] so they share the grey value range.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ComponentCollapseError, InfeasibleKError
from .imagegrid import ImageGrid, Mask

log = logging.getLogger(__name__)

VARIANTS = range(1, 9)
MASK_VARIANTS = frozenset({2, 4, 6, 8})
WARD_MAX_POINTS = 20_000


@dataclass(frozen=True, eq=False)
class FeatureSet:
    points: np.ndarray
    weights: np.ndarray
    variant: int = 0

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.array(self.weights, dtype=np.float64).ravel()
        if points.ndim != 2 or points.shape[0] != weights.size:
            raise ValueError("need one weight per feature point")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def unweighted(cls, points, variant=0):
        points = np.asarray(points, dtype=np.float64)
        return cls(points, np.ones(points.shape[0]), variant)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def n_distinct(self) -> int:
        return np.unique(self.points, axis=0).shape[0]


@dataclass(frozen=True, eq=False)
class Clustering:
    centroids: np.ndarray
    labels: np.ndarray
    within_ss: float
    history: tuple = field(default=())
    variances: np.ndarray | None = None
    mixing: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def extract_features(image: ImageGrid, mask: Mask | None, variant: int) -> FeatureSet:
    if variant not in VARIANTS:
        raise ValueError(f"feature variant must be 1..8, got {variant}")
    values = image.values
    if variant in MASK_VARIANTS:
        if mask is None:
            raise ValueError(f"feature variant {variant} needs a mask")
        if mask.shape != image.shape:
            raise ValueError("mask and image differ in size")
        sel = mask.known
    else:
        sel = np.ones(image.shape, dtype=bool)

    ys, xs = np.nonzero(sel)
    grey = values[ys, xs]
    if variant in (1, 2):
        sx = 255.0 / (image.width - 1) if image.width > 1 else 0.0
        sy = 255.0 / (image.height - 1) if image.height > 1 else 0.0
        points = np.column_stack([xs * sx, ys * sy, grey])
        return FeatureSet(points, np.ones(grey.size), variant)
    if variant in (3, 4):
        return FeatureSet(grey[:, None], np.ones(grey.size), variant)
    uniq, counts = np.unique(grey, return_counts=True)
    if variant in (5, 6):
        return FeatureSet(uniq[:, None], counts.astype(np.float64), variant)
    return FeatureSet(uniq[:, None], np.ones(uniq.size), variant)


def _check_k(features: FeatureSet, k: int):
    if k < 1:
        raise InfeasibleKError(f"k must be positive, got {k}")
    distinct = features.n_distinct()
    if k > distinct:
        raise InfeasibleKError(f"k={k} exceeds the {distinct} distinct feature points")


def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _weighted_means(points, weights, labels, k):
    wsum = np.bincount(labels, weights=weights, minlength=k)
    sums = np.stack([np.bincount(labels, weights=weights * points[:, d], minlength=k)
                     for d in range(points.shape[1])], axis=1)
    return sums / wsum[:, None]


def within_ss(features: FeatureSet, labels, centroids) -> float:
    diff = features.points - np.asarray(centroids)[labels]
    return float(np.sum(features.weights * np.einsum("nd,nd->n", diff, diff)))


def kmeanspp_seed(features: FeatureSet, k: int, rng: np.random.Generator) -> np.ndarray:
    """Squared-distance (D^2) seeding, every draw weighted by the point weight."""
    pts, w = features.points, features.weights
    first = rng.choice(features.n, p=w / w.sum())
    centers = [pts[first]]
    d2 = np.sum((pts - pts[first]) ** 2, axis=1)
    for _ in range(1, k):
        score = w * d2
        idx = rng.choice(features.n, p=score / score.sum())
        centers.append(pts[idx])
        d2 = np.minimum(d2, np.sum((pts - pts[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(features: FeatureSet, centroids: np.ndarray, max_iters: int) -> Clustering:
    pts, w = features.points, features.weights
    k = centroids.shape[0]
    labels = None
    history = []
    for _ in range(max_iters):
        d2 = _sq_dists(pts, centroids)
        new = np.argmin(d2, axis=1)
        own = d2[np.arange(features.n), new]
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # hand the empty cluster the point that currently costs most
            far = int(np.argmax(w * own))
            counts[new[far]] -= 1
            new[far] = j
            own[far] = 0.0
            counts[j] = 1
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = _weighted_means(pts, w, labels, k)
        history.append(within_ss(features, labels, centroids))
    return Clustering(centroids, labels, within_ss(features, labels, centroids), tuple(history))


def kmeans_pp(features: FeatureSet, k: int, seed=0, max_iters: int = 300, n_init: int = 1,
              init=None) -> Clustering:
    """Weighted Lloyd iterations from k-means++ seeding.

    ``n_init`` restarts draw from one generator in sequence; the run with the
    smallest within-cluster sum of squares wins.  ``init`` fixes the initial
    centroids and disables seeding.
    """
    _check_k(features, k)
    if init is not None:
        init = np.asarray(init, dtype=np.float64).reshape(k, features.dim)
        return _lloyd(features, init, max_iters)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        result = _lloyd(features, kmeanspp_seed(features, k, rng), max_iters)
        if best is None or result.within_ss < best.within_ss:
            best = result
    return best


def ward_linkage(features: FeatureSet, k: int) -> Clustering:
    """Agglomerative Ward clustering stopped at ``k`` clusters.

    Pairwise merge costs are increases of the weighted within-cluster sum of
    squares, updated with the Lance-Williams recurrence.  Each row tracks its
    nearest neighbour; cost ties go to the smallest cluster indices.
    ``history`` holds the merge costs in order.
    """
    n = features.n
    if not 1 <= k <= n:
        raise InfeasibleKError(f"k={k} outside 1..{n}")
    if n > WARD_MAX_POINTS:
        raise ValueError(f"Ward clustering of {n} points needs an n x n matrix; "
                         f"use a histogram feature variant")
    pts = features.points
    size = features.weights.copy()
    dist = _sq_dists(pts, pts)
    dist *= (size[:, None] * size[None, :]) / (size[:, None] + size[None, :])
    np.fill_diagonal(dist, np.inf)
    nn = np.argmin(dist, axis=1)
    nnd = dist[np.arange(n), nn]
    owner = np.arange(n)
    active = np.ones(n, dtype=bool)
    costs = []

    for _ in range(n - k):
        i = int(np.argmin(nnd))
        j = int(nn[i])
        a, b = min(i, j), max(i, j)
        cost = float(nnd[i])
        costs.append(cost)
        wa, wb = size[a], size[b]
        merged = ((wa + size) * dist[a] + (wb + size) * dist[b] - size * cost) / (wa + wb + size)
        merged[~active] = np.inf
        merged[a] = merged[b] = np.inf
        dist[a, :] = merged
        dist[:, a] = merged
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        size[a] = wa + wb
        active[b] = False
        nnd[b] = np.inf
        owner[owner == b] = a

        stale = np.flatnonzero(active & ((nn == a) | (nn == b)))
        for r in stale:
            nn[r] = int(np.argmin(dist[r]))
            nnd[r] = dist[r, nn[r]]
        better = active & ((merged < nnd) | ((merged == nnd) & (a < nn)))
        better[a] = False
        nn[better] = a
        nnd[better] = merged[better]
        nn[a] = int(np.argmin(dist[a]))
        nnd[a] = dist[a, nn[a]]

    # clusters numbered by their first member
    _, labels = np.unique(owner, return_inverse=True)
    first = np.array([np.flatnonzero(labels == c)[0] for c in range(k)])
    relabel = np.empty(k, dtype=np.intp)
    relabel[np.argsort(first)] = np.arange(k)
    labels = relabel[labels]
    centroids = _weighted_means(pts, features.weights, labels, k)
    return Clustering(centroids, labels, within_ss(features, labels, centroids), tuple(costs))


def _log_density(pts, means, variances):
    # diagonal Gaussians, result shape (n, k)
    diff2 = (pts[:, None, :] - means[None, :, :]) ** 2
    return -0.5 * np.sum(np.log(2 * np.pi * variances)[None, :, :] + diff2 / variances[None, :, :],
                         axis=2)


def gmm_em(features: FeatureSet, k: int, seed=0, max_iters: int = 200, floor: float = 1e-6,
           tol: float = 1e-10) -> Clustering:
    """Diagonal Gaussian mixture fitted by weighted EM, initialised from k-means++.

    ``history`` holds the log-likelihood before every M-step and after the
    last one.  Hard labels follow the maximum posterior; components that end
    up without members are dropped from the returned clustering.
    """
    _check_k(features, k)
    pts, w = features.points, features.weights
    total = w.sum()
    init = kmeans_pp(features, k, seed=seed)
    means = init.centroids.copy()
    mix = np.bincount(init.labels, weights=w, minlength=k) / total
    variances = np.empty_like(means)
    for j in range(k):
        sel = init.labels == j
        wj = w[sel]
        variances[j] = np.sum(wj[:, None] * (pts[sel] - means[j]) ** 2, axis=0) / wj.sum()
    variances = np.maximum(variances, floor)

    history = []
    for _ in range(max_iters):
        logp = np.log(mix)[None, :] + _log_density(pts, means, variances)
        norm = logsumexp(logp, axis=1)
        ll = float(np.sum(w * norm))
        if history and ll - history[-1] <= tol * abs(ll):
            history.append(ll)
            break
        history.append(ll)
        resp = np.exp(logp - norm[:, None]) * w[:, None]
        nk = resp.sum(axis=0)
        if np.any(nk / total < 1e-12):
            raise ComponentCollapseError(f"component weight fell to {nk.min() / total:.3e}")
        means = (resp.T @ pts) / nk[:, None]
        variances = np.stack([(resp[:, j] @ (pts - means[j]) ** 2) / nk[j] for j in range(k)])
        variances = np.maximum(variances, floor)
        mix = nk / total
    else:
        logp = np.log(mix)[None, :] + _log_density(pts, means, variances)
        history.append(float(np.sum(w * logsumexp(logp, axis=1))))

    logp = np.log(mix)[None, :] + _log_density(pts, means, variances)
    labels = np.argmax(logp, axis=1)
    used = np.unique(labels)
    if used.size < k:
        log.info("GMM: %d of %d components own no points", k - used.size, k)
    relabel = np.full(k, -1)
    relabel[used] = np.arange(used.size)
    labels = relabel[labels]
    means, variances, mix = means[used], variances[used], mix[used]
    return Clustering(means, labels, within_ss(features, labels, means), tuple(history),
                      variances=variances, mixing=mix)


ALGORITHMS = {
    "kmeans": lambda features, k, seed: kmeans_pp(features, k, seed=seed),
    "ward": lambda features, k, seed: ward_linkage(features, k),
    "gmm": lambda features, k, seed: gmm_em(features, k, seed=seed),
}


def cluster(features: FeatureSet, algorithm: str, k: int, seed=0) -> Clustering:
    try:
        run = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown clustering algorithm {algorithm!r}") from None
    return run(features, k, seed)
