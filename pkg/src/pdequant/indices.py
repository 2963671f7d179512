"""Cluster validity indices and the choice of the number of clusters.

Feature weights act as point multiplicities everywhere.  Cluster centres
are the weighted means of the members as given by the labels, which for a
Gaussian mixture may differ slightly from the component means.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .clusterlab import Clustering, FeatureSet, cluster
from .errors import CoincidentCentroidsError

log = logging.getLogger(__name__)

INDEX_NAMES = ("ch", "db", "gap", "silhouette")
W_FLOOR = 1e-12


def _members(features: FeatureSet, clustering: Clustering):
    labels = np.asarray(clustering.labels)
    k = int(labels.max()) + 1
    w = features.weights
    wsum = np.bincount(labels, weights=w, minlength=k)
    means = np.stack([np.bincount(labels, weights=w * features.points[:, d], minlength=k)
                      for d in range(features.dim)], axis=1) / wsum[:, None]
    return labels, k, wsum, means


def calinski_harabasz(features: FeatureSet, clustering: Clustering,
                      size_weighted: bool = True) -> float:
    """Variance ratio criterion; higher is better.

    Each squared centre distance to the overall mean is weighted by the
    cluster weight.  With ``size_weighted=False`` the between-cluster term is
    the plain sum over centres, which grows with k and biases the choice
    towards large k.  A clustering without within-cluster scatter scores
    ``inf``.
    """
    labels, k, wsum, means = _members(features, clustering)
    n = features.total_weight
    if k < 2 or n <= k:
        raise ValueError(f"CH needs 2 <= k < N, got k={k}, N={n:g}")
    overall = features.weights @ features.points / n
    sq = np.sum((means - overall) ** 2, axis=1)
    between = float(wsum @ sq) if size_weighted else float(sq.sum())
    diff = features.points - means[labels]
    within = float(features.weights @ np.einsum("nd,nd->n", diff, diff))
    if within == 0.0:
        return math.inf
    return between / within * (n - k) / (k - 1)


def davies_bouldin(features: FeatureSet, clustering: Clustering) -> float:
    labels, k, wsum, means = _members(features, clustering)
    if k < 2:
        raise ValueError("DB needs at least two clusters")
    spread = np.linalg.norm(features.points - means[labels], axis=1)
    dbar = np.bincount(labels, weights=features.weights * spread, minlength=k) / wsum
    sep = cdist(means, means)
    np.fill_diagonal(sep, np.inf)
    if np.any(sep == 0.0):
        raise CoincidentCentroidsError("two clusters share a centroid")
    ratio = (dbar[:, None] + dbar[None, :]) / sep
    return float(np.mean(ratio.max(axis=1)))


def _distance_sums(features: FeatureSet, labels, k):
    """S[x, c] = sum over members y of cluster c of w_y * |x - y|."""
    pts, w = features.points, features.weights
    n = features.n
    out = np.empty((n, k))
    if features.dim == 1:
        x = pts[:, 0]
        for c in range(k):
            sel = labels == c
            ys = x[sel]
            order = np.argsort(ys, kind="stable")
            ys, wy = ys[order], w[sel][order]
            cw = np.concatenate([[0.0], np.cumsum(wy)])
            cwy = np.concatenate([[0.0], np.cumsum(wy * ys)])
            pos = np.searchsorted(ys, x, side="right")
            left = x * cw[pos] - cwy[pos]
            right = (cwy[-1] - cwy[pos]) - x * (cw[-1] - cw[pos])
            out[:, c] = left + right
        return out
    for c in range(k):
        sel = labels == c
        for start in range(0, n, 2048):
            out[start:start + 2048, c] = cdist(pts[start:start + 2048], pts[sel]) @ w[sel]
    return out


def silhouette_values(features: FeatureSet, clustering: Clustering) -> np.ndarray:
    """Silhouette value of every feature point (0 where the own-cluster distance is 0)."""
    labels, k, wsum, _ = _members(features, clustering)
    if k < 2:
        raise ValueError("silhouette needs at least two clusters")
    sums = _distance_sums(features, labels, k)
    idx = np.arange(features.n)
    own_w = wsum[labels] - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(own_w > 0, sums[idx, labels] / np.where(own_w > 0, own_w, 1.0), 0.0)
        other = sums / wsum[None, :]
    other[idx, labels] = np.inf
    b = other.min(axis=1)
    s = np.zeros(features.n)
    ok = a > 0
    s[ok] = (b[ok] - a[ok]) / np.maximum(a[ok], b[ok])
    return s


def silhouette_mean(features: FeatureSet, clustering: Clustering) -> float:
    s = silhouette_values(features, clustering)
    return float(features.weights @ s / features.total_weight)


def dispersion(features: FeatureSet, labels) -> float:
    """W_k = sum_r 1/(2|C_r|) sum_{i,j in C_r} |x_i - x_j| (unsquared, weighted pairs)."""
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    sums = _distance_sums(features, labels, k)
    wsum = np.bincount(labels, weights=features.weights, minlength=k)
    pair = np.array([features.weights[labels == c] @ sums[labels == c, c] for c in range(k)])
    return float(np.sum(pair / (2.0 * wsum)))


@dataclass(frozen=True)
class GapConfig:
    B: int = 10
    seed: int = 0
    one_se: bool = False

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("need at least one reference dataset")


@dataclass(frozen=True)
class GapResult:
    ks: tuple
    gap: tuple
    sd: tuple

    def choose(self, one_se: bool = False) -> int:
        if one_se:
            for i in range(len(self.ks) - 1):
                if self.gap[i] >= self.gap[i + 1] - self.sd[i + 1]:
                    return self.ks[i]
            return self.ks[-1]
        return self.ks[int(np.argmax(self.gap))]


def uniform_references(features: FeatureSet, B: int, seed) -> list:
    """Uniform draws over the bounding box, one point per feature point."""
    rng = np.random.default_rng(seed)
    lo = features.points.min(axis=0)
    hi = features.points.max(axis=0)
    return [FeatureSet(rng.uniform(lo, hi, size=features.points.shape), features.weights,
                       features.variant) for _ in range(B)]


def gap_statistic(features: FeatureSet, clusterings, config: GapConfig = GapConfig(),
                  algorithm: str = "kmeans", references=None) -> GapResult:
    """Gap values for every k in ``clusterings`` (a mapping k -> Clustering).

    Reference sets are clustered with the same algorithm and seed as the
    data.  ``references`` replaces the uniform null model.
    """
    if references is None:
        references = uniform_references(features, config.B, config.seed)
    ks = sorted(clusterings)
    gaps, sds = [], []
    for k in ks:
        log_w = math.log(max(dispersion(features, clusterings[k].labels), W_FLOOR))
        ref_logs = []
        for ref in references:
            ref_clustering = cluster(ref, algorithm, k, seed=config.seed)
            ref_logs.append(math.log(max(dispersion(ref, ref_clustering.labels), W_FLOOR)))
        ref_logs = np.array(ref_logs)
        gaps.append(float(ref_logs.mean() - log_w))
        sds.append(float(ref_logs.std() * math.sqrt(1.0 + 1.0 / len(references))))
    return GapResult(tuple(ks), tuple(gaps), tuple(sds))


def _pick(ks, values, maximise):
    best_k, best = None, None
    for k, v in zip(ks, values):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        if best is None or (v > best if maximise else v < best):
            best_k, best = k, v
    return best_k


@dataclass
class IndexReport:
    k_min: int
    k_max: int
    ks: list
    values: dict = field(default_factory=dict)
    chosen: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", *INDEX_NAMES])
        for i, k in enumerate(self.ks):
            row = [k]
            for name in INDEX_NAMES:
                vals = self.values.get(name)
                row.append("" if vals is None else format_value(vals[i]))
            writer.writerow(row)
        return buf.getvalue()


def format_value(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".10g")


def _safe(fn, *args):
    try:
        return fn(*args)
    except (ValueError, ZeroDivisionError) as exc:
        log.debug("index undefined: %s", exc)
        return math.nan


def select_k(features: FeatureSet, algorithm: str = "kmeans", k_min: int = 2, k_max: int = 10,
             indices=INDEX_NAMES, seed=0, gap_config: GapConfig | None = None) -> IndexReport:
    """Cluster for every k in [k_min, k_max] and pick k per index.

    CH, silhouette and GAP are maximised, DB minimised; ties go to the
    smaller k.
    """
    if k_min < 2 or k_max < k_min:
        raise ValueError(f"invalid k range [{k_min}, {k_max}]")
    unknown = set(indices) - set(INDEX_NAMES)
    if unknown:
        raise ValueError(f"unknown indices {sorted(unknown)}")
    ks = list(range(k_min, k_max + 1))
    clusterings = {k: cluster(features, algorithm, k, seed=seed) for k in ks}
    report = IndexReport(k_min, k_max, ks)
    if "ch" in indices:
        report.values["ch"] = [_safe(calinski_harabasz, features, clusterings[k]) for k in ks]
        report.chosen["ch"] = _pick(ks, report.values["ch"], maximise=True)
    if "db" in indices:
        report.values["db"] = [_safe(davies_bouldin, features, clusterings[k]) for k in ks]
        report.chosen["db"] = _pick(ks, report.values["db"], maximise=False)
    if "silhouette" in indices:
        report.values["silhouette"] = [_safe(silhouette_mean, features, clusterings[k])
                                       for k in ks]
        report.chosen["silhouette"] = _pick(ks, report.values["silhouette"], maximise=True)
    if "gap" in indices:
        config = gap_config or GapConfig(seed=seed)
        gap = gap_statistic(features, clusterings, config, algorithm)
        report.values["gap"] = list(gap.gap)
        report.chosen["gap"] = gap.choose(config.one_se)
    return report
