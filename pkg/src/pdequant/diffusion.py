"""Homogeneous diffusion (Laplace) inpainting on the pixel grid.

Mask pixels carry Dirichlet data, the outer image boundary is reflecting.
With the 5-point stencil and mirrored neighbours this is the graph Laplacian
of the 4-connected grid.  Eliminating the known pixels leaves a symmetric
positive definite system on the unknown pixels, which is solved with
Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BudgetError, ConvergenceError
from .imagegrid import ImageGrid, Mask

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_BASIS_BUDGET = 200_000_000
_BASIS_CHUNK = 256


def grid_laplacian(height: int, width: int) -> sp.csr_matrix:
    """Neumann graph Laplacian of the 4-connected grid (positive semidefinite).

    Row i holds deg(i) on the diagonal and -1 for every in-domain neighbour,
    so out-of-domain neighbours are dropped and the diagonal shrinks.
    """
    n = height * width
    idx = np.arange(n).reshape(height, width)
    rows, cols = [], []
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        rows.append(a.ravel())
        cols.append(b.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) - adj).tocsr()


def conjugate_gradient(matvec, b, x0=None, precond=None, tol=DEFAULT_TOLERANCE,
                       max_iter=None):
    """Preconditioned CG for a batch of SPD systems sharing one operator.

    ``b`` has shape (m, n): one right-hand side per row.  ``matvec`` maps an
    (m, n) array to (m, n).  ``precond`` is the inverse diagonal, shape (n,).
    Each row is iterated until ``|r| <= tol * |b|`` and then frozen.

    Returns (x, iterations, relative residuals).
    """
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    m, n = b.shape
    if max_iter is None:
        max_iter = 50 * n
    if precond is None:
        precond = np.ones(n)
    x = np.zeros_like(b) if x0 is None else np.array(np.atleast_2d(x0), dtype=np.float64)

    bnorm = np.sqrt(np.add.reduce(b * b, axis=1))
    r = b - matvec(x)
    z = r * precond
    p = z.copy()
    rz = np.add.reduce(r * z, axis=1)
    rnorm = np.sqrt(np.add.reduce(r * r, axis=1))
    scale = np.where(bnorm > 0, bnorm, 1.0)
    active = rnorm > tol * bnorm
    active &= bnorm > 0
    # zero right-hand side has the zero solution
    x[bnorm == 0] = 0.0

    it = 0
    while active.any():
        if it >= max_iter:
            worst = float(np.max(rnorm[active] / scale[active]))
            raise ConvergenceError(
                f"CG did not converge in {max_iter} iterations "
                f"(relative residual {worst:.3e})", worst, it)
        it += 1
        # frozen rows get alpha = beta = 0 and stay bitwise unchanged
        q = matvec(p)
        pq = np.add.reduce(p * q, axis=1)
        alpha = np.where(active, rz / np.where(active, pq, 1.0), 0.0)[:, None]
        x += alpha * p
        r -= alpha * q
        rnorm = np.sqrt(np.add.reduce(r * r, axis=1))
        active &= rnorm > tol * bnorm
        z = r * precond
        rz_new = np.add.reduce(r * z, axis=1)
        beta = np.where(active, rz_new / np.where(active, rz, 1.0), 0.0)[:, None]
        p = z + beta * p
        rz = np.where(active, rz_new, rz)
    return x, it, rnorm / scale


@dataclass(frozen=True)
class InpaintProblem:
    image: ImageGrid
    mask: Mask
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int | None = None

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ in size")
        self.mask.check_inpaintable()
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


class _Reduced:
    """Unknown-pixel block of the Laplacian for one mask."""

    def __init__(self, mask: Mask):
        mask.check_inpaintable()
        lap = grid_laplacian(mask.height, mask.width)
        known = mask.known.ravel()
        self.known_idx = np.flatnonzero(known)
        self.unknown_idx = np.flatnonzero(~known)
        lap_u = lap[self.unknown_idx]
        self.a_uu = lap_u[:, self.unknown_idx].tocsr()
        self.a_uk = lap_u[:, self.known_idx].tocsc()
        self.inv_diag = 1.0 / self.a_uu.diagonal()
        self.size = known.size

    def matvec(self, v):
        # rows of v are independent systems
        return np.ascontiguousarray((self.a_uu @ v.T).T)

    def solve(self, data, tol, max_iter, x0=None):
        """``data`` is (m, n_known); returns the unknown block, shape (m, n_unknown)."""
        rhs = -np.ascontiguousarray((self.a_uk @ np.atleast_2d(data).T).T)
        if max_iter is None:
            max_iter = 50 * self.size
        x, it, res = conjugate_gradient(self.matvec, rhs, x0=x0, precond=self.inv_diag,
                                        tol=tol, max_iter=max_iter)
        # one refinement step on the true residual: the error bound becomes
        # roughly cond * tol**2 instead of cond * tol
        resid = rhs - self.matvec(x)
        dx, it2, _ = conjugate_gradient(self.matvec, resid, precond=self.inv_diag,
                                        tol=tol, max_iter=max_iter)
        x += dx
        log.debug("CG: %d systems, %d unknowns, %d+%d iterations, max residual %.2e",
                  rhs.shape[0], rhs.shape[1], it, it2, float(res.max(initial=0.0)))
        return x


def solve(problem: InpaintProblem, x0: ImageGrid | None = None) -> ImageGrid:
    """Reconstruct the image from its values on the mask.

    ``x0`` optionally warm-starts the iteration on the unknown pixels.
    """
    red = _Reduced(problem.mask)
    f = problem.image.values.ravel()
    start = None if x0 is None else x0.values.ravel()[red.unknown_idx][None, :]
    xu = red.solve(f[red.known_idx][None, :], problem.tolerance, problem.max_iterations, x0=start)
    u = f.copy()
    u[red.unknown_idx] = xu[0]
    return ImageGrid(u.reshape(problem.image.shape))


def inpaint(mask: Mask, grey_values, tolerance=DEFAULT_TOLERANCE, max_iterations=None) -> ImageGrid:
    """Solve with ``grey_values`` given per mask pixel in row-major order."""
    grey_values = np.asarray(grey_values, dtype=np.float64)
    if grey_values.size != mask.count:
        raise ValueError(f"expected {mask.count} grey values, got {grey_values.size}")
    f = np.zeros(mask.known.size)
    f[mask.indices()] = grey_values
    image = ImageGrid(f.reshape(mask.shape))
    return solve(InpaintProblem(image, mask, tolerance, max_iterations))


@dataclass(frozen=True, eq=False)
class InfluenceBasis:
    """Reconstructions of unit impulses at each mask pixel.

    ``fields[i]`` is the flattened reconstruction for the i-th mask pixel in
    row-major order, so ``fields.T @ g`` reconstructs from grey values ``g``.
    """

    mask: Mask
    fields: np.ndarray

    @property
    def m(self) -> int:
        return self.fields.shape[0]

    def field(self, i: int) -> ImageGrid:
        return ImageGrid(self.fields[i].reshape(self.mask.shape))

    def reconstruct(self, grey_values) -> ImageGrid:
        g = np.asarray(grey_values, dtype=np.float64)
        return ImageGrid((g @ self.fields).reshape(self.mask.shape))


def influence_basis(mask: Mask, tolerance=DEFAULT_TOLERANCE, max_iterations=None,
                    budget=DEFAULT_BASIS_BUDGET) -> InfluenceBasis:
    """Explicit basis of the reconstruction operator for ``mask``.

    The unknown block is factorised once (sparse LU) and back-substituted for
    every impulse.  This keeps the basis independent of the CG path used by
    :func:`solve`, so comparing the two is a genuine cross-check.  The result
    is verified against the requested tolerance: partition of unity must hold
    to ``10 * tolerance``.  ``max_iterations`` is accepted for signature
    parity with :func:`solve`; the factorisation does not iterate.
    """
    mask.check_inpaintable()
    m = mask.count
    n = mask.known.size
    if m * n > budget:
        raise BudgetError(f"influence basis needs {m * n} entries, budget is {budget}")
    red = _Reduced(mask)
    lu = spla.splu(red.a_uu.tocsc())
    fields = np.zeros((m, n))
    fields[np.arange(m), red.known_idx] = 1.0
    for start in range(0, m, _BASIS_CHUNK):
        stop = min(start + _BASIS_CHUNK, m)
        rhs = -red.a_uk[:, start:stop].toarray()
        fields[start:stop, red.unknown_idx] = lu.solve(rhs).T
    deviation = float(np.max(np.abs(fields.sum(axis=0) - 1.0)))
    if deviation > 10 * tolerance:
        raise ConvergenceError(
            f"influence basis violates partition of unity by {deviation:.3e}", deviation, 0)
    fields.setflags(write=False)
    return InfluenceBasis(mask, fields)
