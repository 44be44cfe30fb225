import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpr_american.errors import DimensionMismatch, InvalidExponent, NotPositiveDefinite
from gpr_american.linalg import (
    cholesky_lower,
    inverse_from_cholesky,
    log_det_from_cholesky,
    psd_solve,
    singular_gauss_legendre,
)


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky_lower(np.eye(3)), np.eye(3))


def test_cholesky_two_by_two_closed_form():
    low = cholesky_lower(np.array([[1.0, 0.2], [0.2, 1.0]]))
    np.testing.assert_allclose(low, [[1.0, 0.0], [0.2, np.sqrt(0.96)]], atol=1e-15)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_rejects_singular():
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(np.ones((3, 3)))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_cholesky_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n, n))
    a = b @ b.T + n * np.eye(n)
    low = cholesky_lower(a)
    assert np.all(np.triu(low, 1) == 0.0)
    assert np.all(np.diag(low) > 0)
    np.testing.assert_allclose(low @ low.T, a, rtol=1e-12, atol=1e-12 * np.abs(a).max())


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15), seed=st.integers(0, 10_000))
def test_psd_solve_residual(n, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n, n))
    a = b @ b.T + 0.5 * np.eye(n)
    rhs = rng.normal(size=n)
    x = psd_solve(cholesky_lower(a), rhs)
    assert np.linalg.norm(a @ x - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_psd_solve_identity():
    np.testing.assert_array_equal(psd_solve(np.eye(2), np.array([1.0, 2.0])), [1.0, 2.0])


def test_psd_solve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        psd_solve(np.eye(2), np.ones(3))


def test_logdet_and_inverse():
    a = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    low = cholesky_lower(a)
    assert log_det_from_cholesky(low) == pytest.approx(np.log(np.linalg.det(a)), rel=1e-13)
    inv = inverse_from_cholesky(low)
    np.testing.assert_allclose(inv, np.linalg.inv(a), rtol=1e-12)
    np.testing.assert_array_equal(inv, inv.T)


def test_singular_quadrature_pure_power():
    # int_0^1 (1-s)^(h-1) ds = 1/h, exact after the substitution.
    for h in (0.05, 0.3, 0.57, 0.9):
        val = singular_gauss_legendre(lambda w: w ** (h - 1.0), h, complement=True)
        assert val == pytest.approx(1.0 / h, rel=1e-13)


def test_singular_quadrature_polynomial_times_power():
    h = 0.4
    # int_0^1 s (1-s)^(h-1) ds = B(2, h) = 1 / (h (h+1))
    val = singular_gauss_legendre(lambda s: s * (1.0 - s) ** (h - 1.0), h)
    assert val == pytest.approx(1.0 / (h * (h + 1.0)), rel=1e-10)
    val = singular_gauss_legendre(lambda w: (1.0 - w) * w ** (h - 1.0), h, complement=True)
    assert val == pytest.approx(1.0 / (h * (h + 1.0)), rel=1e-13)


@pytest.mark.parametrize("hurst", [0.07, 0.2, 0.4])
@pytest.mark.parametrize("c", [1.001, 1.02, 1.5, 3.0])
def test_singular_quadrature_two_singularities_against_mpmath(hurst, c):
    a = hurst - 0.5
    got = singular_gauss_legendre(
        lambda w: w**a * (c - 1.0 + w) ** a, hurst + 0.5, near=c - 1.0, complement=True
    )
    mpmath.mp.dps = 30
    ref = mpmath.quad(lambda s: (1 - s) ** a * (c - s) ** a, [0, 1 - (c - 1), 1])
    assert got == pytest.approx(float(ref), rel=1e-9)


def test_singular_quadrature_rejects_bad_exponent():
    for h in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidExponent):
            singular_gauss_legendre(lambda s: s, h)
