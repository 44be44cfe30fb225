import numpy as np
import pytest

from gpr_american.bs_model import BsParams, Payoff, crr_american_price_1d
from gpr_american.errors import DimensionTooLarge
from gpr_american.gpr_tree_bs import Standardizer, gpr_tree_step, price_gpr_tree_bs, tree_expectation


def test_single_step_matches_hand_enumeration():
    p = BsParams(np.array([100.0]), 0.05, np.array([0.2]), np.eye(1))
    pay = Payoff("geo-put", 105.0)
    dt = 0.25
    pts = np.array([[90.0], [100.0], [120.0]])
    got = gpr_tree_step(p, pts, pay, dt, pay)
    up = np.exp((0.05 - 0.02) * dt + 0.2 * np.sqrt(dt))
    dn = np.exp((0.05 - 0.02) * dt - 0.2 * np.sqrt(dt))
    for x, g in zip(pts[:, 0], got):
        cont = np.exp(-0.05 * dt) * 0.5 * (max(105 - x * up, 0) + max(105 - x * dn, 0))
        assert g == pytest.approx(max(105 - x, 0, cont), rel=1e-14)


def test_deep_itm_exercise_dominates_with_zero_rate():
    # With r=0 the arithmetic mean is a martingale, so deep in the money the
    # continuation matches immediate exercise up to the two-point lattice's
    # O(dt^2) moment error.
    p = BsParams.equicorrelated(2, rate=0.0)
    pay = Payoff("ari-put", 100.0)
    pts = np.array([[20.0, 25.0]])
    val = gpr_tree_step(p, pts, pay, 0.1, pay)
    assert val[0] >= pay(pts)[0]
    assert val[0] - pay(pts)[0] < 1e-3


def test_zero_payoff_stays_zero():
    p = BsParams.equicorrelated(2)
    rep = price_gpr_tree_bs(p, Payoff("geo-put", 1.0), 1.0, 4, 50)
    assert rep.price == 0.0


def test_tree_expectation_is_block_independent(monkeypatch):
    import gpr_american.gpr_tree_bs as mod

    p = BsParams.equicorrelated(6)
    pts = 100.0 * np.exp(np.random.default_rng(0).normal(scale=0.1, size=(9, 6)))
    pay = Payoff("ari-put", 100.0)
    a = tree_expectation(p, pts, 0.1, pay)
    monkeypatch.setattr(mod, "_ROWS_PER_BLOCK", 7)
    b = tree_expectation(p, pts, 0.1, pay)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_standardizer():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    z = Standardizer(x)(x)
    np.testing.assert_allclose(z, [[-1.0, 0.0], [1.0, 0.0]])


def test_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        price_gpr_tree_bs(BsParams.equicorrelated(21), Payoff("geo-put", 100), 1.0, 10, 100)


def test_single_exercise_date_is_a_tree_step():
    p = BsParams(np.array([100.0]), 0.05, np.array([0.2]), np.eye(1))
    rep = price_gpr_tree_bs(p, Payoff("geo-put", 100.0), 1.0, 1, 10)
    down = 100.0 * np.exp(0.03 - 0.2)
    assert rep.price == pytest.approx(np.exp(-0.05) * 0.5 * (100.0 - down), rel=1e-12)


@pytest.fixture(scope="module")
def d2_reports():
    p = BsParams.equicorrelated(2)
    pay = Payoff("geo-put", 100.0)
    berm = price_gpr_tree_bs(p, pay, 1.0, 10, 300)
    euro = price_gpr_tree_bs(p, pay, 1.0, 10, 300, bermudan=False)
    again = price_gpr_tree_bs(p, pay, 1.0, 10, 300)
    return berm, euro, again


def test_bermudan_dominates_european_and_exercise(d2_reports):
    berm, euro, _ = d2_reports
    assert berm.price >= euro.price
    assert berm.price >= 0.0


def test_determinism(d2_reports):
    berm, _, again = d2_reports
    assert berm.price == again.price
    assert len(berm.per_step) == 9


@pytest.mark.slow
@pytest.mark.parametrize("d", [2, 5, 10])
def test_close_to_benchmark_at_p1000(d):
    p = BsParams.equicorrelated(d)
    bench = crr_american_price_1d(100, 0.05, 0.2 * np.sqrt((1 + (d - 1) * 0.2) / d), 100, 1.0, 1000,
                                  dividend=0.02 - 0.5 * 0.04 * (1 + (d - 1) * 0.2) / d)
    got = price_gpr_tree_bs(p, Payoff("geo-put", 100.0), 1.0, 10, 1000).price
    assert abs(got - bench) <= 0.05
