import math

import numpy as np
import pytest

from gamehedge import (
    MarketParams,
    make_step_model,
    build_stock_lattice,
    payoff_lattices,
    game_put,
    game_call,
)
from gamehedge.model import GamePayoffSpec

from conftest import BENCH, build_bundle


def test_market_params_validation():
    MarketParams(**BENCH)
    with pytest.raises(ValueError):
        MarketParams(r=-0.01, kappa=0.2, T=1.0, z=100.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.06, kappa=0.0, T=1.0, z=100.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.06, kappa=0.2, T=0.0, z=100.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.06, kappa=0.2, T=1.0, z=-1.0)
    with pytest.raises(ValueError):
        MarketParams(r=math.nan, kappa=0.2, T=1.0, z=100.0)


def test_step_model_basic_quantities():
    params = MarketParams(**BENCH)
    step = make_step_model(params, 400)
    h = math.sqrt(1.0 / 400)
    assert step.h == pytest.approx(h, rel=1e-15)
    assert step.dt == pytest.approx(1.0 / 400, rel=1e-15)
    assert step.step_rate == pytest.approx(math.exp(0.06 / 400) - 1.0, rel=1e-14)
    assert step.up_return == pytest.approx(
        math.exp(0.06 / 400 + 0.2 * h) - 1.0, rel=1e-14
    )
    assert step.down_return == pytest.approx(
        math.exp(0.06 / 400 - 0.2 * h) - 1.0, rel=1e-14
    )
    # hand value of the martingale probability
    assert step.p_up == pytest.approx(1.0 / (math.exp(0.2 * h) + 1.0), rel=1e-15)


@pytest.mark.parametrize("n", [1, 2, 7, 64, 1000])
def test_one_step_martingale_condition_exact(n):
    """p*(up - r_n) + (1-p)*(down - r_n) = 0 within a few ulps."""
    params = MarketParams(**BENCH)
    step = make_step_model(params, n)
    resid = step.p_up * (step.up_return - step.step_rate) + step.p_down * (
        step.down_return - step.step_rate
    )
    assert abs(resid) < 1e-15


def test_zero_rate_and_small_vol_limits():
    params = MarketParams(r=0.0, kappa=1e-6, T=1.0, z=50.0)
    step = make_step_model(params, 10)
    assert step.step_rate == 0.0
    assert step.p_up == pytest.approx(0.5, abs=1e-6)


def test_make_step_model_rejects_bad_n():
    params = MarketParams(**BENCH)
    for bad in (0, -3, 1.5, True):
        with pytest.raises(ValueError):
            make_step_model(params, bad)


def test_stock_lattice_one_step_by_hand():
    params = MarketParams(r=0.0, kappa=0.2, T=1.0, z=100.0)
    step = make_step_model(params, 1)
    lat = build_stock_lattice(step, params)
    assert lat.prices[0][0] == pytest.approx(100.0)
    assert lat.prices[1][1] == pytest.approx(100.0 * math.exp(0.2), rel=1e-14)
    assert lat.prices[1][0] == pytest.approx(100.0 * math.exp(-0.2), rel=1e-14)
    # r = 0 so discounted and raw prices coincide
    for k in range(2):
        np.testing.assert_allclose(lat.discounted[k], lat.prices[k], rtol=1e-15)


def test_stock_lattice_recombines():
    """Up-then-down equals down-then-up when built by repeated returns."""
    params = MarketParams(**BENCH)
    step = make_step_model(params, 6)
    lat = build_stock_lattice(step, params)
    ud = params.z * (1.0 + step.up_return) * (1.0 + step.down_return)
    assert lat.prices[2][1] == pytest.approx(ud, rel=1e-13)
    # generic node vs explicit product form
    j, k = 4, 6
    prod = params.z * (1.0 + step.up_return) ** j * (1.0 + step.down_return) ** (k - j)
    assert lat.prices[k][j] == pytest.approx(prod, rel=1e-12)
    # neighbouring ratio is e^{2 kappa h} at every level
    for k in range(1, 7):
        ratios = lat.prices[k][1:] / lat.prices[k][:-1]
        np.testing.assert_allclose(ratios, math.exp(2 * params.kappa * step.h), rtol=1e-13)


def test_discounted_stock_is_martingale():
    params = MarketParams(**BENCH)
    step = make_step_model(params, 200)
    lat = build_stock_lattice(step, params)
    p, q = step.p_up, step.p_down
    worst = 0.0
    for k in range(200):
        cond = p * lat.discounted[k + 1][1:] + q * lat.discounted[k + 1][:-1]
        worst = max(worst, float(np.max(np.abs(cond - lat.discounted[k]))))
    assert worst <= 1e-12 * params.z


def test_lattice_node_limit():
    params = MarketParams(**BENCH)
    step = make_step_model(params, 100)
    with pytest.raises(ValueError):
        build_stock_lattice(step, params, max_nodes=50)


def test_payoff_lattices_put_values():
    params = MarketParams(r=0.0, kappa=0.2, T=1.0, z=100.0)
    step = make_step_model(params, 2)
    lat = build_stock_lattice(step, params)
    yhat, xhat = payoff_lattices(game_put(100.0, 2.0), lat, step)
    np.testing.assert_allclose(
        yhat[2], np.maximum(100.0 - lat.prices[2], 0.0), rtol=1e-14
    )
    np.testing.assert_allclose(xhat[2], yhat[2] + 2.0, rtol=1e-14)


def test_payoff_lattices_discounting():
    """With r > 0 the surcharge is discounted along with the payoff."""
    params = MarketParams(**BENCH)
    step = make_step_model(params, 4)
    lat = build_stock_lattice(step, params)
    yhat, xhat = payoff_lattices(game_put(100.0, 2.0), lat, step)
    k = 2
    disc = math.exp(-params.r * k * step.dt)
    np.testing.assert_allclose(xhat[k] - yhat[k], disc * 2.0, rtol=1e-13)
    assert disc * 2.0 == pytest.approx(2.0 * math.exp(-0.03), rel=1e-14)


def test_payoff_lattices_reject_negative_intrinsic():
    params = MarketParams(**BENCH)
    step = make_step_model(params, 2)
    lat = build_stock_lattice(step, params)
    bad = GamePayoffSpec(
        intrinsic=lambda t, s: s - 1e9, penalty=lambda t: 0.0, lipschitz_C=1.0
    )
    with pytest.raises(ValueError):
        payoff_lattices(bad, lat, step)


def test_payoff_specs_reject_negative_inputs():
    with pytest.raises(ValueError):
        game_put(-1.0)
    with pytest.raises(ValueError):
        game_call(100.0, -0.5)


@pytest.mark.parametrize("spec", [game_put(100.0, 2.0), game_call(100.0, 2.0)])
def test_discounted_payoff_lipschitz_in_stock(spec):
    """Sampled difference quotients of the discounted payoff stay within the
    declared Lipschitz constant."""
    rng = np.random.default_rng(5)
    s = rng.uniform(10.0, 300.0, size=500)
    s2 = s + rng.uniform(0.01, 50.0, size=500)
    for t in (0.0, 0.5, 1.0):
        y1 = np.asarray(spec.intrinsic(t, s), dtype=float)
        y2 = np.asarray(spec.intrinsic(t, s2), dtype=float)
        quot = np.abs(y2 - y1) / (s2 - s)
        assert np.all(quot <= spec.lipschitz_C + 1e-12)


def test_build_bundle_shapes():
    from gamehedge import MarketParams

    params = MarketParams(**BENCH)
    step, lat, yhat, xhat = build_bundle(params, game_put(100.0, 2.0), 5)
    assert len(yhat) == 6
    for k in range(6):
        assert len(yhat[k]) == k + 1
        assert len(xhat[k]) == k + 1
        assert np.all(xhat[k] >= yhat[k])
