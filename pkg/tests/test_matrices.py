import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psdc.matrices import (
    MATRIX_FAMILIES,
    EigenDecomposition,
    TridiagonalMatrix,
    accuracy,
    dense_eig_oracle,
    make_clement,
    make_hermite,
    make_matrix,
    make_sht,
    make_toeplitz_type,
    orthogonality,
    read_tridiagonal,
    residual,
    sht_c,
    sht_d,
    write_tridiagonal,
)

FAMILIES = sorted(MATRIX_FAMILIES)


def test_tridiagonal_validation():
    with pytest.raises(ValueError):
        TridiagonalMatrix([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        TridiagonalMatrix([1.0, np.inf], [0.0])
    with pytest.raises(ValueError):
        TridiagonalMatrix([], [])
    t = TridiagonalMatrix([1.0], [])
    assert t.n == 1 and t.to_dense().shape == (1, 1)


def test_tridiagonal_is_immutable():
    t = make_toeplitz_type(4)
    with pytest.raises(ValueError):
        t.diag[0] = 5.0


@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_matvec_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    t = TridiagonalMatrix(rng.standard_normal(n), rng.standard_normal(n - 1))
    x = rng.standard_normal((n, 3))
    np.testing.assert_allclose(t.matvec(x), t.to_dense() @ x, atol=1e-12)
    np.testing.assert_allclose(t.matvec(x[:, 0]), t.to_dense() @ x[:, 0], atol=1e-12)


def test_clement_small_cases():
    t = make_clement(3)
    assert t.n == 4
    np.testing.assert_array_equal(t.diag, np.zeros(4))
    np.testing.assert_allclose(t.offdiag, [math.sqrt(3), 2.0, math.sqrt(3)], rtol=0, atol=1e-15)
    t1 = make_clement(1)
    np.testing.assert_array_equal(t1.offdiag, [1.0])
    np.testing.assert_array_equal(t1.diag, [0.0, 0.0])
    with pytest.raises(ValueError):
        make_clement(0)


@pytest.mark.parametrize("n", [1, 3, 10, 63])
def test_clement_spectrum_closed_form(n):
    e = dense_eig_oracle(make_clement(n))
    np.testing.assert_allclose(e.values, np.arange(-n, n + 1, 2), atol=1e-10 * n)


def test_hermite_definition_and_spectrum():
    np.testing.assert_allclose(make_hermite(3).offdiag, [1.0, math.sqrt(2)])
    np.testing.assert_allclose(dense_eig_oracle(make_hermite(2)).values, [-1.0, 1.0], atol=1e-15)
    with pytest.raises(ValueError):
        make_hermite(1)
    # Jacobi matrix of the probabilists' Hermite polynomials: eigenvalues are their roots.
    for n in (4, 9, 40):
        roots = np.polynomial.hermite_e.hermegauss(n)[0]
        np.testing.assert_allclose(dense_eig_oracle(make_hermite(n)).values, np.sort(roots), atol=1e-10)


def test_toeplitz_definition_and_spectrum():
    t = make_toeplitz_type(3)
    np.testing.assert_array_equal(t.diag, [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(t.offdiag, [1.0, 1.0])
    np.testing.assert_allclose(dense_eig_oracle(make_toeplitz_type(2)).values, [1.0, 3.0], atol=1e-15)
    k = np.arange(1, 6)
    np.testing.assert_allclose(dense_eig_oracle(make_toeplitz_type(5)).values, np.sort(2 + 2 * np.cos(k * np.pi / 6)), atol=1e-14)
    with pytest.raises(ValueError):
        make_toeplitz_type(1)


def test_sht_entries_follow_formulas():
    t = make_sht(2, 2)
    # Rows j = 0, 1 use l = m + 2j = 2, 4.
    d2 = (2 * 2 * 3 - 2 * 4 - 1) / (3 * 7)
    d4 = (2 * 4 * 5 - 2 * 4 - 1) / (7 * 11)
    np.testing.assert_allclose(t.diag, [d2, d4], rtol=1e-15)
    c2 = math.sqrt(1 * 2 * 5 * 6 / (5 * 49 * 9))
    np.testing.assert_allclose(t.offdiag, [c2], rtol=1e-15)
    assert make_sht(5).n == 5
    np.testing.assert_array_equal(make_sht(5).diag, make_sht(5, 5).diag)


@given(st.integers(0, 500), st.integers(1, 400))
def test_sht_coefficients_bounded(m, offset):
    l = m + offset
    assert abs(float(sht_d(l, m))) < 1
    assert np.isfinite(sht_c(l, m))


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [2, 7, 64])
def test_families_have_requested_order(family, n):
    t = make_matrix(family, n)
    assert t.n == n and t.offdiag.size == n - 1


def test_unknown_family():
    with pytest.raises(ValueError):
        make_matrix("wilkinson", 5)


@pytest.mark.parametrize("family", ["clement", "hermite"])
@pytest.mark.parametrize("n", [16, 101, 512])
def test_zero_diagonal_spectrum_symmetric(family, n):
    lam = dense_eig_oracle(make_matrix(family, n)).values
    np.testing.assert_allclose(lam, -lam[::-1], atol=1e-10)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [50, 512])
def test_oracle_accuracy(family, n):
    t = make_matrix(family, n)
    e = dense_eig_oracle(t)
    acc = accuracy(t, e)
    assert acc.orthogonality <= 1e-12
    assert acc.residual <= 1e-12
    tq = t.matvec(e.vectors)
    assert np.abs(tq - e.vectors * e.values).max() <= 1e-11 * acc.norm2
    np.testing.assert_allclose(np.linalg.norm(e.vectors, axis=0), 1.0, atol=1e-12)


def test_oracle_trivial_cases():
    e = dense_eig_oracle(TridiagonalMatrix([1.0, 2.0, 3.0], [0.0, 0.0]))
    np.testing.assert_array_equal(e.values, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(np.abs(e.vectors), np.eye(3))
    e2 = dense_eig_oracle(TridiagonalMatrix([2.0, 2.0], [1.0]))
    np.testing.assert_allclose(e2.values, [1.0, 3.0], atol=1e-15)
    with pytest.raises(ValueError):
        dense_eig_oracle(make_toeplitz_type(20), max_n=10)


def test_orthogonality_metric():
    assert orthogonality(np.eye(4)) == 0.0
    assert orthogonality(2 * np.eye(2)) == 3.0
    with pytest.raises(ValueError):
        orthogonality(np.ones((2, 3)))


def test_residual_metric():
    t = make_hermite(30)
    assert residual(t, dense_eig_oracle(t)) <= 1e-13
    z = TridiagonalMatrix(np.zeros(3), np.zeros(2))
    assert residual(z, EigenDecomposition(np.zeros(3), np.eye(3))) == 0.0
    with pytest.raises(ValueError):
        residual(t, dense_eig_oracle(make_hermite(10)))


def test_eigendecomposition_requires_ascending():
    with pytest.raises(ValueError):
        EigenDecomposition(np.array([2.0, 1.0]), np.eye(2))


@settings(max_examples=30)
@given(n=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_file_round_trip_is_exact(tmp_path_factory, n, seed):
    rng = np.random.default_rng(seed)
    t = TridiagonalMatrix(rng.standard_normal(n) * 10.0 ** rng.integers(-30, 30), rng.standard_normal(n - 1))
    path = tmp_path_factory.mktemp("tri") / "t.txt"
    write_tridiagonal(path, t)
    back = read_tridiagonal(path)
    np.testing.assert_array_equal(back.diag, t.diag)
    np.testing.assert_array_equal(back.offdiag, t.offdiag)
    assert len(path.read_text().splitlines()) == 3


def test_read_rejects_wrong_count(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3\n1 2\n0 0\n")
    with pytest.raises(ValueError):
        read_tridiagonal(p)
