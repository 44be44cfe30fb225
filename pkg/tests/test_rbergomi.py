import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpr_american.errors import DimensionMismatch
from gpr_american.rbergomi import (
    RbParams,
    alfonsi_nodes,
    fbm_cross_cov,
    paths_from_gaussians,
    rb_covariance,
    rb_simulate,
)


def test_params_validation():
    for bad in (dict(hurst=0.0), dict(hurst=1.0), dict(xi0=0.0), dict(rho=-1.2), dict(s0=-5.0), dict(eta=-1.0)):
        with pytest.raises(ValueError):
            RbParams(**bad)


def test_one_step_covariance_closed_form():
    h, rho, t = 0.07, -0.9, 1.0
    cov = rb_covariance(1, t, h, rho)
    c = 2 * rho * np.sqrt(2 * h) / (2 * h + 1)
    np.testing.assert_allclose(cov.upsilon, [[t, c * t ** (h + 0.5)], [c * t ** (h + 0.5), t ** (2 * h)]], rtol=1e-14)


def test_zero_correlation_decouples():
    cov = rb_covariance(6, 1.0, 0.1, 0.0)
    np.testing.assert_array_equal(cov.upsilon[0::2, 1::2], 0.0)


def test_brownian_special_case():
    cov = rb_covariance(5, 1.0, 0.5, 0.4)
    t = cov.times[1:]
    np.testing.assert_allclose(cov.upsilon[1::2, 1::2], np.minimum.outer(t, t), rtol=1e-12)


@pytest.mark.parametrize("tm,tn", [(0.02, 0.04), (0.5, 0.51), (0.98, 1.0), (0.1, 1.0)])
def test_fbm_cross_cov_against_direct_integral(tm, tn):
    h = 0.07
    mpmath.mp.dps = 30
    ref = 2 * h * mpmath.quad(lambda u: (tm - u) ** (h - 0.5) * (tn - u) ** (h - 0.5), [0, tm - (tn - tm), tm])
    assert fbm_cross_cov(tm, tn, h) == pytest.approx(float(ref), rel=1e-9)


@pytest.mark.parametrize("n_steps,h", [(10, 0.07), (50, 0.07), (100, 0.07), (20, 0.3), (20, 0.8)])
def test_covariance_psd_and_factor(n_steps, h):
    cov = rb_covariance(n_steps, 1.0, h, -0.9)
    ups = cov.upsilon
    assert np.array_equal(ups, ups.T)
    assert np.linalg.eigvalsh(ups).min() > 0
    np.testing.assert_array_equal(np.triu(cov.lam, 1), 0.0)
    assert np.max(np.abs(cov.lam @ cov.lam.T - ups)) <= 1e-10
    np.testing.assert_allclose(np.diag(ups)[0::2], cov.dt)
    np.testing.assert_allclose(np.diag(ups)[1::2], cov.times[1:] ** (2 * h), rtol=1e-14)


def test_future_price_increments_are_independent_of_the_past():
    cov = rb_covariance(8, 1.0, 0.07, -0.9)
    for n in range(8):
        np.testing.assert_allclose(cov.lam[2 * n, : 2 * n], 0.0, atol=1e-12)
        assert cov.lam[2 * n, 2 * n] == pytest.approx(np.sqrt(cov.dt), rel=1e-12)


def test_sample_covariance_matches():
    cov = rb_covariance(4, 1.0, 0.07, -0.9)
    rng = np.random.default_rng(0)
    n = 100_000
    r = rng.standard_normal((n, 8)) @ cov.lam.T
    sample = np.cov(r.T)
    ups = cov.upsilon
    se = np.sqrt((np.outer(np.diag(ups), np.diag(ups)) + ups**2) / n)
    assert np.all(np.abs(sample - ups) <= 5 * se)


def test_zero_vol_of_vol_is_black_scholes():
    p = RbParams(eta=0.0)
    cov = rb_covariance(10, 1.0, p.hurst, p.rho)
    paths = rb_simulate(p, cov, 200, seed=3)
    np.testing.assert_allclose(paths.v, p.xi0, rtol=1e-15)
    dw = (paths.g @ cov.lam.T)[:, 0::2]
    log_s = np.log(p.s0) + np.cumsum((p.r - 0.5 * p.xi0) * cov.dt + np.sqrt(p.xi0) * dw, axis=1)
    np.testing.assert_allclose(np.log(paths.s[:, 1:]), log_s, rtol=1e-13)


def test_path_moments():
    p = RbParams()
    cov = rb_covariance(10, 1.0, p.hurst, p.rho)
    paths = rb_simulate(p, cov, 100_000, seed=1)
    assert np.all(paths.s > 0) and np.all(paths.v > 0)
    assert np.all(paths.s[:, 0] == p.s0) and np.all(paths.v[:, 0] == p.xi0)
    n = paths.p_count
    for k in (1, 5, 10):
        v = paths.v[:, k]
        assert abs(v.mean() - p.xi0) < 3 * v.std() / np.sqrt(n)
        disc = np.exp(-p.r * cov.times[k]) * paths.s[:, k]
        assert abs(disc.mean() - p.s0) < 3 * disc.std() / np.sqrt(n)


def test_simulation_is_deterministic_and_reproducible_from_g():
    p = RbParams()
    cov = rb_covariance(6, 1.0, p.hurst, p.rho)
    a = rb_simulate(p, cov, 50, seed=9)
    b = rb_simulate(p, cov, 50, seed=9)
    assert a.s.tobytes() == b.s.tobytes() and a.g.tobytes() == b.g.tobytes()
    c = paths_from_gaussians(p, cov, a.g)
    assert c.v.tobytes() == a.v.tobytes()
    # Per-path streams: the first paths do not depend on how many are drawn.
    d = rb_simulate(p, cov, 10, seed=9)
    assert d.s.tobytes() == a.s[:10].tobytes()
    with pytest.raises(DimensionMismatch):
        paths_from_gaussians(p, cov, np.zeros((2, 5)))


def test_alfonsi_moments():
    a = alfonsi_nodes()
    assert abs(a.probs.sum() - 1.0) <= 1e-16
    assert np.all(a.probs > 0)
    for k in (1, 3, 5, 7):
        assert a.moment(k) == 0.0
    assert a.moment(2) == pytest.approx(1.0, abs=1e-14)
    assert a.moment(4) == pytest.approx(3.0, abs=1e-12)
    assert a.moment(6) == pytest.approx(15.0, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(h=st.floats(0.02, 0.98), rho=st.floats(-1.0, 1.0), n=st.integers(1, 12))
def test_covariance_factorizes_for_any_parameters(h, rho, n):
    cov = rb_covariance(n, 1.0, h, rho)
    assert np.max(np.abs(cov.lam @ cov.lam.T - cov.upsilon)) <= 1e-9
