import numpy as np
import pytest
import scipy.sparse as sp

from acoustomax import fem, forward
from acoustomax.linsolve import Factorization, SolveReport, SolverError, solve


def test_identity_solve():
    A = sp.eye(10, format="csc", dtype=complex)
    b = np.arange(10, dtype=complex) + 1j
    x, rep = solve(A, b)
    assert np.array_equal(x, b)
    assert rep.residual <= 1e-10
    assert isinstance(rep, SolveReport)


def test_2x2_complex_symmetric_closed_form():
    # [[2, i], [i, 1]] has det = 3; inverse = (1/3) [[1, -i], [-i, 2]]
    A = sp.csc_matrix(np.array([[2.0, 1j], [1j, 1.0]]))
    x, rep = solve(A, np.array([1.0, 0.0], dtype=complex))
    assert np.allclose(x, [1.0 / 3.0, -1j / 3.0], rtol=1e-14)
    assert rep.residual <= 1e-10


def test_random_recovery():
    rng = np.random.default_rng(42)
    n = 200
    A = sp.random(n, n, density=0.05, random_state=np.random.RandomState(1))
    A = (A + A.T + 10 * sp.eye(n)).astype(complex)
    A = A + 1j * sp.eye(n)
    x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    b = A @ x0
    x, _ = solve(A.tocsc(), b)
    assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-8


def test_deterministic_bitwise():
    rng = np.random.default_rng(0)
    n = 150
    A = (sp.random(n, n, density=0.08, random_state=np.random.RandomState(2))
         + 5 * sp.eye(n)).astype(complex)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x1, _ = solve(A.tocsc(), b)
    x2, _ = solve(A.tocsc(), b)
    assert np.array_equal(x1, x2)


def test_singular_matrix_raises():
    A = sp.csc_matrix((3, 3), dtype=complex)
    with pytest.raises(SolverError):
        solve(A, np.ones(3, dtype=complex))


def test_shape_errors():
    A = sp.eye(3, format="csc", dtype=complex)
    with pytest.raises(SolverError):
        Factorization(sp.csc_matrix(np.ones((2, 3))))
    with pytest.raises(SolverError):
        Factorization(A).solve(np.ones(4, dtype=complex))


def test_zero_rhs_returns_zero():
    A = sp.eye(4, format="csc", dtype=complex) * 3.0
    x, rep = solve(A, np.zeros(4, dtype=complex))
    assert np.all(x == 0)
    assert rep.residual == 0.0


def test_factorization_multiple_rhs():
    rng = np.random.default_rng(9)
    n = 80
    A = (sp.random(n, n, density=0.1, random_state=np.random.RandomState(3))
         + 4 * sp.eye(n)).astype(complex)
    f = Factorization(A.tocsc())
    for _ in range(3):
        b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x, rep = f.solve(b)
        assert rep.residual <= 1e-10


def test_impedance_system_refinement2_residual(mild_medium, two_bump_source):
    from acoustomax.fem import QuadratureCache
    from acoustomax.mesh import gen_disk_mesh

    cache = QuadratureCache(gen_disk_mesh(1.0, 2))
    E = forward.solve_impedance(cache, mild_medium, source=two_bump_source)
    assert E.report.residual <= 1e-10
