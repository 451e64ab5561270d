import numpy as np
import pytest

from bermudan_dual.market import ModelParams, TimeGrid, simulate_paths
from bermudan_dual.payoffs import PayoffSpec, clamp_counter, evaluate_payoff, reward_matrix


def test_single_asset_payoffs():
    put = PayoffSpec("put", strike=100)
    assert put([90.0]) == 10.0
    assert put([110.0]) == 0.0
    call = PayoffSpec("call", strike=100)
    assert call([110.0]) == 10.0


def test_butterfly_is_a_tent():
    bf = PayoffSpec("butterfly", strikes=(90, 110))
    s = np.array([[80.0], [85.0], [90.0], [95.0], [100.0], [105.0], [110.0], [120.0]])
    np.testing.assert_allclose(bf(s), [0, 0, 0, 5, 10, 5, 0, 0])
    grid = np.linspace(0, 220, 10001)[:, None]
    assert np.all(bf(grid) >= 0)


def test_multi_asset_payoffs():
    s = np.array([[120.0, 95.0], [80.0, 110.0]])
    np.testing.assert_allclose(PayoffSpec("max_call", strike=100)(s), [20.0, 10.0])
    np.testing.assert_allclose(PayoffSpec("min_put", strike=100)(s), [5.0, 20.0])
    b = np.array([[90.0, 100.0, 110.0], [80.0, 85.0, 90.0]])
    np.testing.assert_allclose(PayoffSpec("basket_put", strike=100)(b), [0.0, 15.0])
    w = PayoffSpec("basket_put", strike=100, weights=(0.5, 0.25, 0.25))
    np.testing.assert_allclose(w(b), [2.5, 16.25])


def test_invalid_specs():
    with pytest.raises(ValueError):
        PayoffSpec("swap", strike=1)
    with pytest.raises(ValueError):
        PayoffSpec("butterfly", strikes=(110, 90))
    with pytest.raises(ValueError):
        PayoffSpec("put")
    with pytest.raises(ValueError):
        evaluate_payoff(PayoffSpec("put", strike=100), np.ones((3, 2)))


def test_no_clamping_on_supported_payoffs():
    before = clamp_counter["count"]
    PayoffSpec("butterfly", strikes=(90, 110))(np.linspace(1, 300, 5000)[:, None])
    assert clamp_counter["count"] == before


def test_reward_matrix_discounts():
    p = ModelParams(100.0, 0.0, 0.0, 0.06, 0.0, 1.0)
    g = TimeGrid(4, 1, 1.0)
    P = simulate_paths(p, g, 3, 1)
    Z = reward_matrix(PayoffSpec("put", strike=120), P, p.r)
    s = 100 * np.exp(0.06 * g.exercise_times)
    np.testing.assert_allclose(Z[0], np.exp(-0.06 * g.exercise_times) * np.maximum(120 - s, 0))
    assert Z.shape == (3, 5)
