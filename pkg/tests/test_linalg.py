import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ferrovolt import linalg as la
from ferrovolt.oracles import DENSE_LIMIT, OracleError, dense_reference_solve

from lu_reference import doolittle_solve


def laplacian_1d(n: int, shift: float = 0.0) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), (2.0 + shift) * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def laplacian_2d(n: int) -> sp.csr_matrix:
    T = laplacian_1d(n)
    I = sp.eye(n)
    return (sp.kron(T, I) + sp.kron(I, T)).tocsr()


def random_dominant(rng, n: int, density: float = 0.2) -> sp.csr_matrix:
    off = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1, 1, k))
    off = off - sp.diags(off.diagonal())
    diag = abs(off).sum(axis=1).A1 + rng.uniform(0.5, 2.0, n)
    return (off + sp.diags(diag)).tocsr()


def test_system_validation():
    with pytest.raises(ValueError, match="zero diagonal"):
        la.SparseSystem(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 1.0]])), np.ones(2))
    with pytest.raises(ValueError, match="shapes"):
        la.SparseSystem(sp.eye(3), np.ones(2))
    with pytest.raises(ValueError, match="non-finite"):
        la.SparseSystem(sp.eye(2), np.array([1.0, np.inf]))
    with pytest.raises(la.SolverConfigError):
        la.SolverConfig(method="multigrid")
    with pytest.raises(la.SolverConfigError):
        la.SolverConfig(tolerance=0.0)


def test_hand_lu_matches_numpy(rng):
    C = rng.normal(size=(12, 12)) + 12 * np.eye(12)
    b = rng.normal(size=(12, 3))
    assert np.allclose(doolittle_solve(C, b), np.linalg.solve(C, b))


@pytest.mark.parametrize("method", [la.CONJUGATE_GRADIENT, la.BICGSTAB, la.GAUSS_SEIDEL, la.DIRECT])
def test_solvers_agree_with_dense_oracles(method, rng):
    C = laplacian_2d(12) + sp.diags(rng.uniform(0, 0.1, 144))
    b = rng.normal(size=(144, 3))
    cfg = la.SolverConfig(method, tolerance=1e-12, max_iterations=20000)
    res = la.solve(la.SparseSystem(C, b), np.zeros_like(b), cfg)
    assert res.ok
    ref = doolittle_solve(C.toarray(), b)
    assert np.allclose(res.x, ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())
    assert np.allclose(dense_reference_solve(la.SparseSystem(C, b)), ref, rtol=1e-12)


def test_cg_reaches_tight_tolerance_within_n_iterations():
    C = laplacian_2d(15)
    b = np.ones(C.shape[0])
    res = la.solve(la.SparseSystem(C, b), np.zeros_like(b), la.SolverConfig(tolerance=1e-10, max_iterations=C.shape[0]))
    assert res.ok and res.iterations <= C.shape[0]
    assert np.linalg.norm(C @ res.x - b) <= 1e-10 * np.linalg.norm(b)


def test_bicgstab_on_nonsymmetric_system(rng):
    C = random_dominant(rng, 80)
    b = rng.normal(size=80)
    res = la.solve(la.SparseSystem(C, b), np.zeros(80), la.SolverConfig(la.BICGSTAB, tolerance=1e-12))
    assert res.ok
    assert np.allclose(res.x, doolittle_solve(C.toarray(), b), rtol=1e-8)


def test_zero_rhs_returns_immediately():
    C = laplacian_1d(10)
    res = la.solve(la.SparseSystem(C, np.zeros(10)), np.zeros(10))
    assert res.ok and res.iterations == 0 and np.all(res.x == 0)


def test_iteration_cap_reports_max_iterations():
    C = laplacian_2d(20)
    res = la.solve(la.SparseSystem(C, np.ones(400)), np.zeros(400), la.SolverConfig(la.GAUSS_SEIDEL, 1e-12, 3))
    assert res.status == la.MAX_ITERATIONS and not res.ok


def test_dense_oracle_refuses_large_and_singular():
    with pytest.raises(OracleError):
        dense_reference_solve(la.SparseSystem(sp.eye(DENSE_LIMIT + 1), np.ones(DENSE_LIMIT + 1)))
    S = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(OracleError):
        dense_reference_solve(la.SparseSystem(S, np.ones(2)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30), lam=st.floats(0.05, 1.0))
def test_implicit_relaxation_fixed_point(seed, n, lam):
    rng = np.random.default_rng(seed)
    C = random_dominant(rng, n)
    x_star = rng.normal(size=(n, 3))
    system = la.SparseSystem(C, C @ x_star)
    relaxed = la.implicit_relax(system, x_star, lam)
    # the converged solution solves the relaxed system too
    assert np.abs(relaxed.residual(x_star)).max() <= 1e-12 * max(1.0, np.abs(relaxed.source).max())
    assert np.allclose(relaxed.diagonal, system.diagonal / lam, rtol=1e-14)
    assert la.implicit_relax(system, rng.normal(size=(n, 3)), 1.0) is system


def test_implicit_relaxation_increases_dominance(rng):
    C = laplacian_1d(20)
    s = la.SparseSystem(C, np.ones(20))
    assert la.implicit_relax(s, np.zeros(20), 0.8).dominance_ratio() > s.dominance_ratio()


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(0.01, 1.0))
def test_explicit_relaxation_formula(vals, lam):
    new = np.array(vals)
    old = new[::-1].copy()
    out = la.explicit_relax(new, old, lam)
    assert np.array_equal(out, old + lam * (new - old))
    assert np.array_equal(la.explicit_relax(new, old, 1.0), old + (new - old))


def test_relaxation_factor_range():
    s = la.SparseSystem(sp.eye(2), np.ones(2))
    for bad in (0.0, 1.5, -0.2):
        with pytest.raises(la.SolverConfigError):
            la.implicit_relax(s, np.zeros(2), bad)
        with pytest.raises(la.SolverConfigError):
            la.explicit_relax(np.ones(2), np.zeros(2), bad)


def test_residual_norms():
    s = la.SparseSystem(sp.eye(3), np.array([1.0, -2.0, 2.0]))
    n = la.residual_norms(s, np.zeros(3), normalization=10.0)
    assert (n.l1, n.l2, n.linf, n.normalized) == (5.0, 3.0, 2.0, 0.5)
    assert la.residual_norms(s, s.source).normalized == 0.0


def test_matrix_market_dump(tmp_path):
    import scipy.io

    s = la.SparseSystem(laplacian_1d(5), np.arange(5.0))
    la.dump_matrix_market(s, tmp_path / "sys.mtx")
    assert np.allclose(scipy.io.mmread(str(tmp_path / "sys.mtx")).toarray(), s.matrix.toarray())
    assert np.allclose(scipy.io.mmread(str(tmp_path / "sys_rhs.mtx")).ravel(), s.source)
