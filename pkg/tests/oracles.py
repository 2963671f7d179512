"""Independent reference implementations used by the tests.

Everything here is deliberately naive: dense matrices, explicit loops and
exhaustive enumeration, so it shares no code path with the package.
"""

from __future__ import annotations

import itertools

import numpy as np


def dense_inpaint(f: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Assemble the full 5-point Neumann system and solve it directly."""
    h, w = f.shape
    n = h * w
    A = np.zeros((n, n))
    b = np.zeros(n)
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if known[y, x]:
                A[i, i] = 1.0
                b[i] = f[y, x]
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w:
                    A[i, i] += 1.0
                    A[i, yy * w + xx] -= 1.0
    return np.linalg.solve(A, b).reshape(h, w)


def piecewise_linear(width: int, knots, values) -> np.ndarray:
    return np.interp(np.arange(width), knots, values)


def kmeans_brute_force(points, k: int, weights=None) -> float:
    """Smallest within-cluster sum of squares over all partitions into k non-empty groups."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64)
    labels = np.array(list(itertools.product(range(k), repeat=len(pts))))
    total = np.zeros(len(labels))
    valid = np.ones(len(labels), dtype=bool)
    for c in range(k):
        member = (labels == c) * w
        mass = member.sum(axis=1)
        valid &= mass > 0
        safe = np.where(mass > 0, mass, 1.0)
        for d in range(pts.shape[1]):
            s1 = member @ pts[:, d]
            s2 = member @ pts[:, d] ** 2
            total += s2 - s1 ** 2 / safe
    return float(np.maximum(total[valid], 0.0).min())


def quantized_brute_force(fields: np.ndarray, f: np.ndarray, levels) -> float:
    """Minimal squared error over every assignment of levels to mask pixels."""
    best = np.inf
    for combo in itertools.product(levels, repeat=fields.shape[0]):
        r = np.asarray(combo) @ fields - f
        best = min(best, float(r @ r))
    return best


def entropy_bits(symbols, alphabet: int) -> float:
    """Empirical order-0 entropy of the whole sequence, in bits."""
    counts = np.bincount(np.asarray(symbols), minlength=alphabet).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-counts[counts > 0] @ np.log2(p))


def three_blobs(seed: int, per_blob: int = 50, sigma: float = 0.5, means=(0.0, 50.0, 100.0)):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(m, sigma, per_blob) for m in means])


def random_instance(rng: np.random.Generator, max_side: int = 16):
    """Random image and a mask with at least one known and one unknown pixel."""
    while True:
        h, w = rng.integers(1, max_side + 1, size=2)
        if h * w < 2:
            continue
        f = rng.uniform(0, 255, size=(h, w))
        known = rng.random((h, w)) < rng.uniform(0.05, 0.6)
        if 0 < known.sum() < known.size:
            return f, known
