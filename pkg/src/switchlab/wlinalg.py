"""Dense linear algebra on the n x n queue grid under an entrywise-weighted
inner product.

Every vector lives in R^(n^2) and is handled as an (n, n) float array; for a
fixed positive weight matrix c the inner product is

    cdot(x, y) = sum_ij c_ij * x_ij * y_ij.

The module provides the two projections the analytics and simulator modules
are built on:

* ``project_space``: orthogonal projection onto the "port-sum" subspace of
  vectors of the form x_ij = (w_i + wt_j) / c_ij with w, wt real, computed
  through a prefactored Gram system.
* ``project_cone``: nearest point in the cone obtained by restricting
  w, wt >= 0, computed by clamped block coordinate descent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, cho_factor, cho_solve, lu_factor, lu_solve

__all__ = [
    "CostMatrix",
    "ProjectionBasis",
    "ConeProjection",
    "SingularMatrixError",
    "ConvergenceError",
    "cdot",
    "cnorm2",
    "cnorm",
    "solve_dense",
    "project_space",
    "project_cone",
    "cone_kkt_residual",
    "row_generator",
    "col_generator",
    "unit_vector",
    "complement_basis_vector",
]

# Pivots below PIVOT_RTOL * max|A| are treated as zero in solve_dense.
PIVOT_RTOL = 1e-12


class SingularMatrixError(ValueError):
    """Raised when a linear system is singular to working tolerance."""


class ConvergenceError(RuntimeError):
    """Raised when the cone projection fails to converge within its budget."""


@dataclass(eq=False)
class CostMatrix:
    """Strictly positive per-queue weights defining the inner product."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {c.shape}")
        if c.shape[0] < 2:
            raise ValueError("port count must be at least 2")
        if not np.all(np.isfinite(c)) or not np.all(c > 0):
            raise ValueError("all cost entries must be finite and > 0")
        c.flags.writeable = False
        self.c = c

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.c.ravel()

    @property
    def cmax(self) -> float:
        return float(self.c.max())

    @property
    def cmin(self) -> float:
        return float(self.c.min())


def _as_grid(x, n: int) -> np.ndarray:
    """Coerce a vector to an (n, n) float array, row-major."""
    a = np.asarray(x, dtype=float)
    if a.shape == (n, n):
        return a
    if a.shape == (n * n,):
        return a.reshape(n, n)
    raise ValueError(f"expected a {n}x{n} grid or length-{n*n} vector, got shape {a.shape}")


def cdot(x, y, cost: CostMatrix) -> float:
    """Weighted inner product sum_ij c_ij x_ij y_ij.

    x*y is formed first so the result is exactly symmetric in (x, y).
    """
    n = cost.n
    return float((cost.c * (_as_grid(x, n) * _as_grid(y, n))).sum())


def cnorm2(x, cost: CostMatrix) -> float:
    """Squared weighted norm; 0 iff x == 0."""
    n = cost.n
    g = _as_grid(x, n)
    return float((cost.c * g * g).sum())


def cnorm(x, cost: CostMatrix) -> float:
    return float(np.sqrt(cnorm2(x, cost)))


def unit_vector(n: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((n, n))
    e[i, j] = 1.0
    return e


def row_generator(cost: CostMatrix, i: int) -> np.ndarray:
    """Generator with 1/c_ij across input row i, zero elsewhere."""
    g = np.zeros((cost.n, cost.n))
    g[i, :] = 1.0 / cost.c[i, :]
    return g


def col_generator(cost: CostMatrix, j: int) -> np.ndarray:
    """Generator with 1/c_ij down output column j, zero elsewhere."""
    g = np.zeros((cost.n, cost.n))
    g[:, j] = 1.0 / cost.c[:, j]
    return g


def complement_basis_vector(cost: CostMatrix, i: int, j: int) -> np.ndarray:
    """Basis vector of the orthogonal complement of the port-sum subspace.

    For i, j in [0, n-1) it has a +1 block entry at (i, j), -1 at (i, n-1)
    and (n-1, j), and +1 at (n-1, n-1); its weighted inner product with every
    row/column generator vanishes.
    """
    n = cost.n
    if not (0 <= i < n - 1 and 0 <= j < n - 1):
        raise ValueError("complement basis indices run over the leading (n-1)x(n-1) block")
    b = np.zeros((n, n))
    b[i, j] = 1.0
    b[i, n - 1] = -1.0
    b[n - 1, j] = -1.0
    b[n - 1, n - 1] = 1.0
    return b


def solve_dense(A, b) -> np.ndarray:
    """Solve a small dense square system by LU with partial pivoting.

    Raises SingularMatrixError when any pivot falls below
    PIVOT_RTOL * max|A|.
    """
    A = np.array(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError("right-hand side length does not match matrix")
    amax = float(np.abs(A).max())
    if amax == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A)
    if float(np.abs(np.diag(lu)).min()) < PIVOT_RTOL * amax:
        raise SingularMatrixError("matrix is singular to working tolerance")
    return lu_solve((lu, piv), b)


@dataclass(eq=False)
class ProjectionBasis:
    """Stacked generators of the port-sum subspace with a prefactored Gram.

    Z has 2n-1 columns: the n row generators followed by the first n-1
    column generators (the last column generator is dependent through the
    all-(1/c) vector).
    """

    n: int
    Z: np.ndarray
    gram: np.ndarray
    _cho: tuple = field(repr=False, default=None)

    @classmethod
    def from_cost(cls, cost: CostMatrix) -> "ProjectionBasis":
        n = cost.n
        cols = [row_generator(cost, i).ravel() for i in range(n)]
        cols += [col_generator(cost, j).ravel() for j in range(n - 1)]
        Z = np.array(cols).T
        gram = Z.T @ (cost.flat[:, None] * Z)
        cho = cho_factor(gram)
        return cls(n=n, Z=Z, gram=gram, _cho=cho)

    def solve(self, v: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho, v)


def project_space(x, basis: ProjectionBasis, cost: CostMatrix):
    """Split x into its port-sum component and the orthogonal remainder.

    Returns (parallel, perp) with parallel + perp == x and
    cdot(parallel, perp) == 0 up to roundoff.
    """
    if basis.n != cost.n:
        raise ValueError("basis and cost dimensions differ")
    g = _as_grid(x, cost.n)
    v = basis.Z.T @ (cost.flat * g.ravel())
    u = basis.solve(v)
    parallel = (basis.Z @ u).reshape(cost.n, cost.n)
    return parallel, g - parallel


@dataclass
class ConeProjection:
    """Result of projecting onto the nonnegative port-sum cone."""

    parallel: np.ndarray
    perp: np.ndarray
    w: np.ndarray
    wt: np.ndarray
    sweeps: int


def project_cone(
    x,
    cost: CostMatrix,
    tol: float = 1e-10,
    max_sweeps: int = 10**6,
    w0: np.ndarray | None = None,
    wt0: np.ndarray | None = None,
) -> ConeProjection:
    """Nearest point to x, in the weighted norm, of the form
    y_ij = (w_i + wt_j) / c_ij with w, wt >= 0.

    Block coordinate descent: given wt, each w_i has a closed-form clamped
    minimizer (and vice versa); the blocks alternate until the largest
    coordinate change drops below tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = cost.n
    g = _as_grid(x, n)
    y = cost.c * g                     # target in potential units
    r = 1.0 / cost.c
    rw = r.sum(axis=1)
    rc = r.sum(axis=0)
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    wt = np.zeros(n) if wt0 is None else np.array(wt0, dtype=float)
    if w.shape != (n,) or wt.shape != (n,):
        raise ValueError("warm-start vectors must have length n")
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        w_new = np.maximum(0.0, (r * (y - wt[None, :])).sum(axis=1) / rw)
        wt_new = np.maximum(0.0, (r * (y - w_new[:, None])).sum(axis=0) / rc)
        delta = max(
            float(np.abs(w_new - w).max()),
            float(np.abs(wt_new - wt).max()),
        )
        w, wt = w_new, wt_new
        if delta < tol:
            break
    else:
        raise ConvergenceError(
            f"cone projection did not converge in {max_sweeps} sweeps (tol={tol:g})"
        )
    parallel = (w[:, None] + wt[None, :]) * r
    return ConeProjection(parallel=parallel, perp=g - parallel, w=w, wt=wt, sweeps=sweeps)


def cone_kkt_residual(x, proj: ConeProjection, cost: CostMatrix) -> float:
    """Largest violation of the projection optimality conditions.

    Certifies cdot(x - p, y - p) <= 0 for every cone point y by testing
    y = 0, y = 2p and y = p + g over all row/column generators g, which
    together are equivalent to the KKT conditions of the projection.
    """
    n = cost.n
    resid = cost.c * (_as_grid(x, n) - proj.parallel)   # c .* (x - p)
    # <x - p, g> for each generator reduces to row / column sums of (x - p).
    diff = _as_grid(x, n) - proj.parallel
    row_sums = diff.sum(axis=1)
    col_sums = diff.sum(axis=0)
    worst = max(float(row_sums.max(initial=0.0)), float(col_sums.max(initial=0.0)))
    # y = 0 and y = 2p bracket <x - p, p> around zero.
    p_dot = float((resid * proj.parallel).sum())
    return max(worst, abs(p_dot))
