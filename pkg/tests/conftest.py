"""Shared independent oracles for the test suite.

These deliberately take different computational routes than the library:
Gram-Schmidt orthonormalization for subspace projections and Lawson-Hanson
NNLS for cone projections.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import nnls

from switchlab.wlinalg import CostMatrix, col_generator, row_generator


def gs_orthonormal_basis(cost: CostMatrix) -> list[np.ndarray]:
    """Orthonormalize the stacked generators under the weighted inner product."""
    n = cost.n
    d = cost.flat
    cols = [row_generator(cost, i).ravel() for i in range(n)]
    cols += [col_generator(cost, j).ravel() for j in range(n - 1)]
    basis = []
    for v in cols:
        v = v.copy()
        for f in basis:
            v -= float((d * f * v).sum()) * f
        v /= np.sqrt(float((d * v * v).sum()))
        basis.append(v)
    return basis


def oracle_space_projection(x: np.ndarray, cost: CostMatrix) -> np.ndarray:
    d = cost.flat
    flat = np.asarray(x, dtype=float).ravel()
    out = np.zeros_like(flat)
    for f in gs_orthonormal_basis(cost):
        out += float((d * f * flat).sum()) * f
    return out.reshape(cost.n, cost.n)


def oracle_zeta(cost: CostMatrix) -> np.ndarray:
    """Overlap fractions from the orthonormalized basis, normalized per entry."""
    n = cost.n
    d = cost.flat
    basis = gs_orthonormal_basis(cost)
    zeta = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            e = np.zeros(n * n)
            e[i * n + j] = 1.0
            zeta[i, j] = sum(float((d * f * e).sum()) ** 2 for f in basis) / cost.c[i, j]
    return zeta


def oracle_cone_residual2(x: np.ndarray, cost: CostMatrix) -> float:
    """Squared weighted distance from x to the cone, via NNLS."""
    n = cost.n
    d = np.sqrt(cost.flat)
    cols = [row_generator(cost, i).ravel() for i in range(n)]
    cols += [col_generator(cost, j).ravel() for j in range(n)]
    A = np.array(cols).T * d[:, None]
    b = np.asarray(x, dtype=float).ravel() * d
    _, res = nnls(A, b)
    return float(res**2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
