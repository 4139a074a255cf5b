from __future__ import annotations

import numpy as np
import pytest

from switchlab.wlinalg import (
    ConvergenceError,
    CostMatrix,
    ProjectionBasis,
    SingularMatrixError,
    cdot,
    cnorm2,
    col_generator,
    complement_basis_vector,
    cone_kkt_residual,
    project_cone,
    project_space,
    row_generator,
    solve_dense,
    unit_vector,
)
from conftest import oracle_cone_residual2, oracle_space_projection


def ones_cost(n):
    return CostMatrix(np.ones((n, n)))


def random_cost(rng, n, lo=0.1, hi=10.0):
    return CostMatrix(rng.uniform(lo, hi, (n, n)))


# -------- inner product --------

def test_cdot_all_ones():
    c = ones_cost(2)
    x = np.ones((2, 2))
    assert cdot(x, x, c) == 4.0


def test_cdot_disjoint_supports(rng):
    c = random_cost(rng, 2)
    assert cdot(unit_vector(2, 0, 0), unit_vector(2, 1, 1), c) == 0.0


def test_cdot_hand_expansion():
    c = CostMatrix([[1, 2], [2, 1]])
    x = np.array([[1, 2], [3, 4]])
    y = np.ones((2, 2))
    assert cdot(x, y, c) == 15.0


def test_cdot_dimension_mismatch():
    c = ones_cost(2)
    with pytest.raises(ValueError):
        cdot(np.ones((3, 3)), np.ones((3, 3)), c)


def test_cnorm2_examples():
    assert cnorm2(np.zeros((2, 2)), ones_cost(2)) == 0.0
    c = CostMatrix([[3, 1], [1, 1]])
    assert cnorm2(unit_vector(2, 0, 0), c) == 3.0
    assert cnorm2(np.ones((3, 3)), ones_cost(3)) == 9.0


def test_bilinearity_symmetry_and_positivity(rng):
    for _ in range(300):
        n = int(rng.integers(2, 7))
        c = random_cost(rng, n)
        x, y, z = (rng.normal(size=(n, n)) for _ in range(3))
        a, b = rng.normal(size=2)
        assert cdot(a * x + b * y, z, c) == pytest.approx(
            a * cdot(x, z, c) + b * cdot(y, z, c), abs=1e-9
        )
        assert cdot(x, y, c) == cdot(y, x, c)
        assert cnorm2(x, c) >= 0.0
    assert cnorm2(np.zeros((4, 4)), ones_cost(4)) == 0.0


# -------- dense solver --------

def test_solve_identity():
    u = solve_dense(np.eye(3), [1.0, 2.0, 3.0])
    assert np.allclose(u, [1, 2, 3], atol=0)


def test_solve_hand_system():
    # the 3x3 system arising from n=2 unit weights; solution known by hand
    A = np.array([[2.0, 1.0, 1.0], [0.0, 1.0, -1.0], [1.0, 2.0, 1.0]])
    u = solve_dense(A, [1.0, 0.0, 1.0])
    assert np.allclose(u, [0.25, 0.25, 0.25], atol=1e-14)


def test_solve_singular_zero_matrix():
    with pytest.raises(SingularMatrixError):
        solve_dense(np.zeros((2, 2)), [1.0, 1.0])


def test_solve_singular_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        solve_dense(A, [1.0, 1.0])


def test_solve_residual_bound(rng):
    for _ in range(300):
        k = int(rng.integers(2, 12))
        A = rng.normal(size=(k, k)) + k * np.eye(k)
        b = rng.normal(size=k)
        u = solve_dense(A, b)
        assert np.abs(A @ u - b).max() <= 1e-10 * (1.0 + np.abs(b).max())


# -------- subspace projection --------

def test_project_space_idempotent_on_member(rng):
    c = random_cost(rng, 3)
    basis = ProjectionBasis.from_cost(c)
    x = row_generator(c, 0)
    par, perp = project_space(x, basis, c)
    assert np.abs(par - x).max() < 1e-12
    assert np.abs(perp).max() < 1e-12


def test_project_space_orthogonal_complement_vector():
    c = ones_cost(2)
    basis = ProjectionBasis.from_cost(c)
    x = np.array([[1.0, -1.0], [-1.0, 1.0]])
    par, perp = project_space(x, basis, c)
    assert np.abs(par).max() < 1e-12
    assert np.allclose(perp, x)


def test_project_space_unit_vector_energy():
    c = ones_cost(2)
    basis = ProjectionBasis.from_cost(c)
    par, _ = project_space(unit_vector(2, 0, 0), basis, c)
    assert cnorm2(par, c) == pytest.approx(0.75, abs=1e-12)


def test_pythagoras_and_idempotence(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        c = random_cost(rng, n)
        basis = ProjectionBasis.from_cost(c)
        x = rng.normal(size=(n, n)) * rng.uniform(0.1, 50)
        par, perp = project_space(x, basis, c)
        total = cnorm2(x, c)
        assert abs(total - cnorm2(par, c) - cnorm2(perp, c)) <= 1e-8 * (1e-12 + total)
        assert abs(cdot(par, perp, c)) <= 1e-9 * (1e-12 + total)
        par2, perp2 = project_space(par, basis, c)
        assert np.abs(par2 - par).max() <= 1e-9 * (1.0 + np.abs(par).max())
        assert np.abs(perp2).max() <= 1e-9 * (1.0 + np.abs(par).max())


def test_project_space_matches_gram_schmidt_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 6))
        c = random_cost(rng, n)
        basis = ProjectionBasis.from_cost(c)
        x = rng.normal(size=(n, n)) * 5
        par, _ = project_space(x, basis, c)
        assert np.abs(par - oracle_space_projection(x, c)).max() < 1e-9


def test_projection_basis_invariants(rng):
    for n in (2, 4, 6):
        c = random_cost(rng, n)
        basis = ProjectionBasis.from_cost(c)
        assert basis.Z.shape == (n * n, 2 * n - 1)
        assert np.allclose(basis.gram, basis.gram.T)
        assert np.all(np.linalg.eigvalsh(basis.gram) > 0)
        # column k <= n-1 lives on row k of the grid with entries 1/c
        col0 = basis.Z[:, 0].reshape(n, n)
        assert np.allclose(col0[0], 1.0 / c.c[0])
        assert np.abs(col0[1:]).max() == 0.0
        # complement basis vectors are orthogonal to every generator
        for i in range(n - 1):
            for j in range(n - 1):
                b = complement_basis_vector(c, i, j)
                for k in range(n):
                    assert abs(cdot(b, row_generator(c, k), c)) < 1e-12
                    assert abs(cdot(b, col_generator(c, k), c)) < 1e-12


# -------- cone projection --------

def test_cone_fixed_point(rng):
    for _ in range(50):
        n = int(rng.integers(2, 6))
        c = random_cost(rng, n)
        w = rng.uniform(0, 5, n)
        wt = rng.uniform(0, 5, n)
        x = (w[:, None] + wt[None, :]) / c.c
        proj = project_cone(x, c)
        assert cnorm2(proj.perp, c) < 1e-18 * (1 + cnorm2(x, c))


def test_cone_orthogonal_vector_projects_to_zero():
    c = ones_cost(2)
    x = np.array([[1.0, -1.0], [-1.0, 1.0]])
    proj = project_cone(x, c)
    assert np.abs(proj.parallel).max() < 1e-9
    assert cnorm2(proj.perp, c) == pytest.approx(4.0, abs=1e-9)


def test_cone_negative_generator_projects_to_zero(rng):
    c = random_cost(rng, 3)
    proj = project_cone(-row_generator(c, 0), c)
    assert np.abs(proj.parallel).max() < 1e-9


def test_cone_nonnegative_potentials(rng):
    for _ in range(100):
        n = int(rng.integers(2, 6))
        c = random_cost(rng, n)
        proj = project_cone(rng.normal(size=(n, n)) * 5, c)
        assert proj.w.min() >= 0 and proj.wt.min() >= 0


def test_cone_matches_nnls_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(2, 7))
        c = random_cost(rng, n)
        x = rng.normal(size=(n, n)) * 5
        proj = project_cone(x, c)
        got = cnorm2(proj.perp, c)
        want = oracle_cone_residual2(x, c)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-10)


def test_cone_kkt_certificate(rng):
    for _ in range(200):
        n = int(rng.integers(2, 7))
        c = random_cost(rng, n)
        x = rng.normal(size=(n, n)) * 5
        proj = project_cone(x, c)
        assert cone_kkt_residual(x, proj, c) <= 1e-7 * (1.0 + cnorm2(x, c))


def test_cone_dominated_by_space(rng):
    for _ in range(200):
        n = int(rng.integers(2, 6))
        c = random_cost(rng, n)
        basis = ProjectionBasis.from_cost(c)
        x = rng.normal(size=(n, n)) * 5
        _, perp_s = project_space(x, basis, c)
        proj = project_cone(x, c)
        assert cnorm2(proj.perp, c) >= cnorm2(perp_s, c) - 1e-8


def test_cone_nonconvergence_raises():
    c = CostMatrix([[1.0, 9.0], [9.0, 1.0]])
    x = np.array([[4.0, -3.0], [-2.0, 5.0]])
    with pytest.raises(ConvergenceError):
        project_cone(x, c, tol=1e-16, max_sweeps=2)


def test_cone_tol_must_be_positive():
    with pytest.raises(ValueError):
        project_cone(np.ones((2, 2)), ones_cost(2), tol=0.0)


def test_cost_matrix_validation():
    with pytest.raises(ValueError):
        CostMatrix(np.ones((1, 1)))
    with pytest.raises(ValueError):
        CostMatrix([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        CostMatrix([[1.0, -2.0], [1.0, 1.0]])
