"""Mask construction and grey value (tonal) optimisation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .codec.quant import nearest_level
from .diffusion import InfluenceBasis, InpaintProblem, conjugate_gradient, solve
from .imagegrid import ImageGrid, Mask, mse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparsifyConfig:
    """Parameters of the stochastic sparsification.

    Each round a random ``candidate_fraction`` of the current mask is removed
    tentatively; the ``removal_fraction`` of those candidates with the lowest
    local error is dropped for good, the rest is put back.
    """

    target_density: float
    candidate_fraction: float = 0.1
    seed: int = 0
    removal_fraction: float = 0.5
    tolerance: float = 1e-6

    def __post_init__(self):
        if not 0 < self.target_density < 1:
            raise ValueError(f"target_density must lie in (0, 1), got {self.target_density}")
        if not 0 < self.candidate_fraction <= 1:
            raise ValueError(f"candidate_fraction must lie in (0, 1], got {self.candidate_fraction}")
        if not 0 < self.removal_fraction <= 1:
            raise ValueError(f"removal_fraction must lie in (0, 1], got {self.removal_fraction}")


@dataclass(frozen=True, eq=False)
class TonalResult:
    grey_values: np.ndarray
    achieved_mse: float
    iterations: int
    history: tuple = field(default=())


def target_count(n_pixels: int, density: float) -> int:
    count = int(math.floor(density * n_pixels + 0.5))
    return min(max(count, 1), n_pixels - 1)


def sparsify_mask(image: ImageGrid, config: SparsifyConfig) -> Mask:
    f = image.values
    n = f.size
    if n < 2:
        raise ValueError("image needs at least two pixels")
    target = target_count(n, config.target_density)
    rng = np.random.default_rng(config.seed)
    known = np.ones(n, dtype=bool)
    u = image
    rounds = 0
    while True:
        idx = np.flatnonzero(known)
        excess = idx.size - target
        if excess <= 0:
            break
        n_cand = min(max(1, math.ceil(config.candidate_fraction * idx.size)), idx.size - 1)
        cand = np.sort(rng.choice(idx, size=n_cand, replace=False))
        trial = known.copy()
        trial[cand] = False
        trial_mask = Mask(trial.reshape(f.shape))
        u = solve(InpaintProblem(image, trial_mask, tolerance=config.tolerance), x0=u)
        sq = (u.values - f) ** 2
        local = ndimage.uniform_filter(sq, size=3, mode="constant").ravel()
        n_remove = min(max(1, int(round(config.removal_fraction * n_cand))), excess)
        order = np.argsort(local[cand], kind="stable")
        known[cand[order[:n_remove]]] = False
        rounds += 1
    log.debug("sparsify: %d rounds to %d known pixels", rounds, target)
    return Mask(known.reshape(f.shape))


def _check_basis(mask: Mask, basis: InfluenceBasis):
    if basis.mask != mask:
        raise ValueError("influence basis was built for a different mask")


def optimize_tonal(image: ImageGrid, mask: Mask, basis: InfluenceBasis,
                   tolerance: float = 1e-8, max_iterations: int | None = None) -> TonalResult:
    """Least-squares grey values for a fixed mask (CG on the normal equations)."""
    _check_basis(mask, basis)
    B = basis.fields
    f = image.values.ravel()
    g0 = f[mask.indices()]
    rhs = (B @ f)[None, :]
    diag = np.einsum("ij,ij->i", B, B)

    def normal(v):
        return (v @ B) @ B.T

    g, iters, _ = conjugate_gradient(normal, rhs, x0=g0[None, :], precond=1.0 / diag,
                                     tol=tolerance,
                                     max_iter=max_iterations or 50 * basis.m)
    g = g[0]
    achieved = mse(basis.reconstruct(g), image)
    return TonalResult(g, achieved, iters, (mse(basis.reconstruct(g0), image), achieved))


def optimize_tonal_quantized(image: ImageGrid, mask: Mask, basis: InfluenceBasis, levels,
                             max_sweeps: int = 100, initial=None) -> TonalResult:
    """Greedy coordinate descent over a fixed set of grey levels.

    Pixels are visited in row-major order; each takes the level that lowers
    the squared reconstruction error most (lower level on ties).  Trials are
    exact because the reconstruction is linear in the grey values.  Starts
    from ``initial`` or from the nearest levels of the original values.
    """
    _check_basis(mask, basis)
    levels = np.sort(np.asarray(getattr(levels, "levels", levels), dtype=np.float64))
    if levels.size == 0:
        raise ValueError("need at least one level")
    B = basis.fields
    f = image.values.ravel()
    if initial is None:
        initial = f[mask.indices()]
    g = levels[nearest_level(initial, levels)]
    norms = np.einsum("ij,ij->i", B, B)

    history = []
    sweeps = 0
    while True:
        r = g @ B - f
        energy = float(r @ r)
        history.append(energy)
        if sweeps >= max_sweeps:
            break
        changed = False
        for i in range(B.shape[0]):
            c = float(B[i] @ r)
            delta = levels - g[i]
            gain = delta * (2.0 * c + delta * norms[i])
            j = int(np.argmin(gain))
            if gain[j] < -1e-12 * (1.0 + energy):
                g[i] = levels[j]
                r += delta[j] * B[i]
                energy += gain[j]
                changed = True
        sweeps += 1
        if not changed:
            break
    achieved = history[-1] / f.size
    return TonalResult(g, achieved, sweeps, tuple(history))

