import numpy as np
import pytest
from scipy.integrate import simpson

from gpr_american import gpr
from gpr_american.bs_model import BsParams, Payoff
from gpr_american.gpr import GprModel, KernelSpec
from gpr_american.gpr_ei_bs import (
    ZGrid,
    build_zgrid,
    ei_continuation,
    exercise_price_at,
    gaussian_smoothed_sum,
    price_gpr_ei_bs,
)
from gpr_american.sampling import build_state_cloud


def _model(train, weights, sf, sl, mean=0.0):
    return GprModel(KernelSpec("se", sf, [sl]), np.atleast_2d(train), np.asarray(weights, float), 0.0, mean)


def test_exercise_price_mapping():
    p = BsParams.equicorrelated(2)
    z = np.array([[4.5, 4.7]])
    np.testing.assert_allclose(exercise_price_at(z, 0.0, p), np.exp(z))
    np.testing.assert_allclose(exercise_price_at(z, 0.5, p), np.exp(z + 0.03 * 0.5))
    cloud = build_state_cloud(p, 1.0, 20)
    grid = build_zgrid(p, cloud, 1.0, 0.1)
    np.testing.assert_allclose(exercise_price_at(grid.z_points, 1.0, p), cloud.points, rtol=1e-13)


def test_degenerate_convolution_is_the_kernel():
    grid = ZGrid(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))
    m = _model([[0.0]], [1.0], 1.0, 1.0)
    assert ei_continuation(grid, m, 0.1, 0.0)[0] == pytest.approx(1.0, rel=1e-15)


def test_single_term_symbolic():
    sf, sl, pi, zq, zp, w, r, dt = 1.3, 0.4, 0.09, 0.2, -0.1, 2.5, 0.05, 0.25
    grid = ZGrid(np.array([[zp]]), np.array([[pi]]), np.zeros(1))
    m = _model([[zq]], [w], sf, sl)
    ref = np.exp(-r * dt) * w * sf**2 * sl / np.sqrt(pi + sl**2) * np.exp(-0.5 * (zq - zp) ** 2 / (pi + sl**2))
    assert ei_continuation(grid, m, dt, r)[0] == pytest.approx(ref, rel=1e-14)


def test_one_dimensional_against_quadrature():
    rng = np.random.default_rng(1)
    train = rng.normal(4.6, 0.2, size=(25, 1))
    model = gpr.fit(train, np.maximum(100 - np.exp(train[:, 0]), 0.0), "se")
    pi = 0.2**2 * 0.1
    targets = np.array([[4.4], [4.6], [4.75]])
    grid = ZGrid(targets, np.array([[pi]]), np.zeros(1))
    got = ei_continuation(grid, model, 0.1, 0.05)
    for zp, g in zip(targets[:, 0], got):
        sd = np.sqrt(pi)
        y = np.linspace(zp - 8 * sd, zp + 8 * sd, 20001)
        dens = np.exp(-0.5 * (y - zp) ** 2 / pi) / np.sqrt(2 * np.pi * pi)
        ref = np.exp(-0.05 * 0.1) * simpson(dens * gpr.predict(model, y[:, None]), x=y)
        assert g == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_against_monte_carlo(d):
    rng = np.random.default_rng(10 + d)
    p = BsParams.equicorrelated(d, rho=0.3, vol=0.25)
    dt = 0.2
    train = rng.normal(4.6, 0.3, size=(15, d))
    model = gpr.fit(train, np.maximum(100 - np.exp(train.mean(axis=1)), 0.0), "se")
    target = rng.normal(4.6, 0.1, size=(1, d))
    grid = ZGrid(target, p.log_increment_cov(dt), np.zeros(d))
    got = ei_continuation(grid, model, dt, p.rate)[0]
    n = 1_000_000
    draws = target + rng.standard_normal((n, d)) @ np.linalg.cholesky(grid.pi).T
    vals = np.exp(-p.rate * dt) * gpr.predict(model, draws)
    se = vals.std() / np.sqrt(n)
    assert abs(got - vals.mean()) < 3 * se + 1e-12


def test_cholesky_route_matches_closed_form_2d():
    rng = np.random.default_rng(4)
    train = rng.normal(size=(6, 2))
    w = rng.normal(size=6)
    pi = np.array([[0.04, 0.01], [0.01, 0.09]])
    sf, sl = 0.8, 0.6
    targets = rng.normal(size=(4, 2))
    got = gaussian_smoothed_sum(train, w, sf, sl, pi, targets)
    m = pi + sl**2 * np.eye(2)
    det = m[0, 0] * m[1, 1] - m[0, 1] ** 2
    inv = np.array([[m[1, 1], -m[0, 1]], [-m[0, 1], m[0, 0]]]) / det
    ref = []
    for t in targets:
        delta = train - t
        q = np.einsum("qi,ij,qj->q", delta, inv, delta)
        ref.append(np.sum(w * sf**2 * sl**2 * np.exp(-0.5 * q) / np.sqrt(det)))
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_centering_constant_carried_through():
    grid = ZGrid(np.zeros((2, 1)), np.array([[0.01]]), np.zeros(1))
    m = _model([[0.0]], [0.0], 1.0, 1.0, mean=7.0)
    np.testing.assert_allclose(ei_continuation(grid, m, 0.5, 0.04), 7.0 * np.exp(-0.02), rtol=1e-15)


def test_rejects_ard_surrogate():
    grid = ZGrid(np.zeros((1, 2)), np.eye(2) * 0.01, np.zeros(2))
    m = GprModel(KernelSpec("ard", 1.0, [1.0, 2.0]), np.zeros((1, 2)), np.ones(1), 0.0)
    with pytest.raises(ValueError):
        ei_continuation(grid, m, 0.1, 0.05)


def test_grid_is_time_invariant_and_price_floor():
    p = BsParams.equicorrelated(3)
    cloud = build_state_cloud(p, 1.0, 200)
    grid = build_zgrid(p, cloud, 1.0, 0.1)
    with pytest.raises(ValueError):
        grid.z_points[0, 0] = 1.0
    rep = price_gpr_ei_bs(p, Payoff("ari-put", 100.0), 1.0, 5, 200)
    assert rep.price >= 0.0
    deep = price_gpr_ei_bs(p, Payoff("ari-put", 200.0), 1.0, 5, 200)
    assert deep.price >= 100.0


def test_determinism():
    p = BsParams.equicorrelated(2)
    a = price_gpr_ei_bs(p, Payoff("geo-put", 100.0), 1.0, 5, 200)
    b = price_gpr_ei_bs(p, Payoff("geo-put", 100.0), 1.0, 5, 200)
    assert a.price == b.price
    assert [s["signal_std"] for s in a.per_step] == [s["signal_std"] for s in b.per_step]
