import numpy as np
import pytest

from bermudan_dual.analytics import bs_call_delta, bs_put
from bermudan_dual.lattice import (
    BinomialModel,
    NodeMapping,
    delta,
    doob_meyer,
    european_value,
    martingale_on_paths,
    optimal_stopping_level,
    snell_solve,
    tree_paths,
    values_on_paths,
)
from bermudan_dual.market import ModelParams
from bermudan_dual.payoffs import PayoffSpec

PUT = PayoffSpec("put", strike=100)


def small_tree(steps=12, N=4, sigma=0.4):
    p = ModelParams(100.0, sigma, 0.0, 0.06, 0.0, 0.5)
    return BinomialModel.from_params(p, steps, N)


def test_model_invariants():
    m = small_tree()
    assert 0 < m.p < 1
    assert m.exercise_steps == (0, 3, 6, 9, 12)
    s = m.level_spots(3)
    np.testing.assert_allclose(s[1:] / s[:-1], m.up**2)
    # discounted asset is a tree martingale
    a0, a1 = m.discounted_asset(0), m.discounted_asset(1)
    assert m.p * a1[1] + (1 - m.p) * a1[0] == pytest.approx(a0[0], rel=1e-14)
    with pytest.raises(ValueError):
        BinomialModel(100, 0.4, 0.06, 0.0, 0.5, 4, (0, 2))


def test_crr_put_convergence():
    p = ModelParams(100.0, 0.4, 0.0, 0.06, 0.0, 0.5)
    u500 = snell_solve(BinomialModel.from_params(p, 500, 10), PUT).price
    u1000 = snell_solve(BinomialModel.from_params(p, 1000, 10), PUT).price
    assert u500 == pytest.approx(9.90, abs=0.02)
    assert abs(u1000 - u500) < 0.005


def test_european_tree_matches_black_scholes():
    m = small_tree(steps=2000, N=1)
    assert european_value(m, PUT) == pytest.approx(bs_put(0, 100, 100, 0.5, 0.06, 0.4), abs=5e-3)
    # exercise only at maturity gives the European value
    only_T = BinomialModel(100, 0.4, 0.06, 0.0, 0.5, 50, (50,))
    assert snell_solve(only_T, PUT).price == pytest.approx(european_value(only_T, PUT), abs=1e-14)


def test_zero_payoff():
    t = snell_solve(small_tree(), PayoffSpec("put", strike=1e-9))
    assert all(np.all(u == 0) for u in t.U)
    assert delta(t, 0, 0) == 0.0


def test_snell_recursion_and_doob_meyer():
    t = snell_solve(small_tree(), PUT)
    dm = doob_meyer(t)
    p = t.model.p
    for m in range(t.model.steps):
        assert np.all(t.U[m] >= t.cont[m] - 1e-14)
        np.testing.assert_allclose(p * dm.dM_up[m] + (1 - p) * dm.dM_down[m], 0, atol=1e-12)
        assert np.all(dm.dA[m] >= -1e-14)
        if m not in t.model.exercise_steps:
            np.testing.assert_allclose(dm.dA[m], 0, atol=1e-14)


def test_decomposition_and_surely_optimal_identity():
    t = snell_solve(small_tree(), PUT)
    tp = tree_paths(t.model)
    assert tp.weights.sum() == pytest.approx(1.0, abs=1e-14)
    M = martingale_on_paths(t, tp)
    U = values_on_paths(t.U, tp)
    dA = np.concatenate([np.zeros((tp.n_paths, 1)), np.cumsum(values_on_paths(doob_meyer(t).dA, tp), 1)], 1)
    np.testing.assert_allclose(U, t.price + M - dA, atol=1e-12)
    Z = values_on_paths(t.Z, tp)
    for n in t.model.exercise_steps:
        later = [j for j in t.model.exercise_steps if j >= n]
        best = np.max(Z[:, later] - (M[:, later] - M[:, [n]]), axis=1)
        np.testing.assert_allclose(best, U[:, n], atol=1e-12)


def test_optimal_stopping_gives_price():
    t = snell_solve(small_tree(), PUT)
    tp = tree_paths(t.model)
    tau = optimal_stopping_level(t, tp)
    Z = values_on_paths(t.Z, tp)
    assert tp.weights @ Z[np.arange(tp.n_paths), tau] == pytest.approx(t.price, abs=1e-12)


def test_deltas():
    t = snell_solve(small_tree(steps=12, N=4, sigma=0.05), PUT)
    # deep in the money with low volatility: intrinsic slope
    deep = BinomialModel(60.0, 0.05, 0.06, 0.0, 0.5, 12, (0, 3, 6, 9, 12))
    assert delta(snell_solve(deep, PUT), 0, 0) == pytest.approx(-1.0, abs=1e-9)
    call = PayoffSpec("call", strike=100)
    m = BinomialModel(100, 0.4, 0.06, 0.0, 0.5, 2000, (2000,))
    assert delta(snell_solve(m, call), 0, 0) == pytest.approx(bs_call_delta(0, 100, 100, 0.5, 0.06, 0.4), abs=2e-3)
    with pytest.raises(IndexError):
        delta(t, 12, 0)


def test_zero_vol_tree_is_deterministic():
    m = BinomialModel(100.0, 0.0, 0.06, 0.0, 0.5, 4, (0, 1, 2, 3, 4))
    t = snell_solve(m, PayoffSpec("put", strike=120))
    dm = doob_meyer(t)
    for m_ in range(4):
        np.testing.assert_allclose(dm.dM_up[m_], 0, atol=1e-14)
    # discounting makes waiting worse: exercise at once
    assert t.price == pytest.approx(20.0)


def test_node_mapping_recovers_nodes():
    m = small_tree()
    tp = tree_paths(m)
    nm = NodeMapping(m)
    for lvl in range(m.steps + 1):
        np.testing.assert_array_equal(nm.activations(lvl, tp.spots[:, lvl : lvl + 1]), tp.ups[:, lvl])


def test_enumeration_limit():
    with pytest.raises(ValueError):
        tree_paths(small_tree(steps=14, N=2))
