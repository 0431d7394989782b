import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjm_mc.estimator import (InsufficientSamples, TolUnreachable, adaptive_price, price, sample_payoffs,
                              sample_stats, stat_error)
from hjm_mc.grid import build_uniform_grid
from hjm_mc.models import make_model
from hjm_mc.oracles import exact_functional_ho_lee
from hjm_mc.payoff import builtin_rule, linear_payoff


def frozen(model):
    z = lambda x: np.zeros(np.shape(x))
    return dataclasses.replace(model, xi=z, xi_prime=z, xi_second=z, xi_sq=z, xi_sq_prime=z, xi_sq_second=z,
                               xi_const=0.0)


def test_sample_stats_examples():
    assert sample_stats([1, 1, 1, 1]) == (1.0, 0.0)
    assert sample_stats([0, 2]) == (1.0, 1.0)
    m, s = sample_stats([1, 2, 3, 4])
    assert m == 2.5 and s == pytest.approx(math.sqrt(1.25), rel=1e-15)
    with pytest.raises(InsufficientSamples):
        sample_stats([3.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
def test_sample_stats_matches_numpy(vals):
    m, s = sample_stats(vals)
    assert m == pytest.approx(np.mean(vals), rel=1e-12, abs=1e-9)
    assert s == pytest.approx(np.std(vals), rel=1e-9, abs=1e-6)


@given(st.floats(1e-9, 1e3), st.floats(0.0, 1e3), st.integers(2, 10**7))
def test_stat_error_scaling(c0, std, M):
    assert stat_error(std, 4 * M, c0) == pytest.approx(stat_error(std, M, c0) / 2, rel=1e-14)
    assert stat_error(std, 2 * M, c0) == pytest.approx(stat_error(std, M, c0) / math.sqrt(2), rel=1e-14)


def test_stat_error_examples():
    assert stat_error(0.0, 10) == 0.0
    assert stat_error(1.0, 100, 1.65) == pytest.approx(0.165, rel=1e-15)


@pytest.fixture
def ho_lee_setup():
    g = build_uniform_grid(5, 10, 1.0, 2.0, 1.0)
    return make_model("ho_lee"), linear_payoff(1.0), g, builtin_rule()


def test_deterministic_dynamics(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    m0 = frozen(m)
    est = price(m0, pay, g, rule, "efd", 50, seed=3)
    assert est.std == 0.0 and est.stat_error == 0.0
    Y = float(np.dot(g.dt, m0.f0(g.t_nodes[:-1])))
    lam = sum(h * (np.dot(rule.weights, m0.f0(a + h * rule.nodes)))
              for a, h in zip(g.tau_nodes[g.ell_a:-1], g.dtau[g.ell_a:]))
    assert est.value == pytest.approx((1 - Y) * lam, rel=1e-13)


def test_price_matches_exact_within_bound():
    m = make_model("ho_lee")
    g = build_uniform_grid(20, 20, 1.0, 2.0, 1.0)
    est = price(m, linear_payoff(1.0), g, builtin_rule(), "efd", 5000, seed=2)
    exact = exact_functional_ho_lee(m.params, 1.0, 2.0)
    assert abs(est.value - exact) < est.stat_error + 3e-4


def test_antithetic_reduces_variance(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    plain = price(m, pay, g, rule, "efd", 2000, seed=1)
    anti = price(m, pay, g, rule, "efd", 2000, seed=1, antithetic=True)
    assert anti.n_samples == 1000 and anti.M == 2000
    # variance of the mean at equal path count
    assert anti.std**2 / anti.n_samples <= 0.5 * plain.std**2 / plain.n_samples


def test_antithetic_pair_is_one_sample(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    pairs = sample_payoffs(m, pay, g, rule, "efd", 10, seed=4, antithetic=True)
    plus = sample_payoffs(m, pay, g, rule, "efd", 10, seed=4)
    assert pairs.shape == (10,)
    assert not np.array_equal(pairs, plus)
    with pytest.raises(ValueError):
        price(m, pay, g, rule, "efd", 11, seed=0, antithetic=True)


@pytest.mark.parametrize("workers", [2, 3])
def test_worker_count_does_not_change_estimate(ho_lee_setup, workers):
    m, pay, g, rule = ho_lee_setup
    a = price(m, pay, g, rule, "efd", 700, seed=9, chunk=64)
    b = price(m, pay, g, rule, "efd", 700, seed=9, chunk=64, workers=workers)
    assert a == b


def test_adaptive_deterministic_returns_at_m0(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    est = adaptive_price(frozen(m), pay, g, rule, "efd", 1e-12, 16, 16)
    assert est.M == 16


def test_adaptive_growth(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    base = price(m, pay, g, rule, "efd", 400, seed=0)
    a = adaptive_price(m, pay, g, rule, "efd", base.stat_error / 2, 100, 10**5, seed=0)
    b = adaptive_price(m, pay, g, rule, "efd", base.stat_error / 4, 100, 10**5, seed=0)
    assert b.M / a.M == pytest.approx(4, rel=0.5)
    assert b.stat_error <= base.stat_error / 4


def test_adaptive_unreachable(ho_lee_setup):
    m, pay, g, rule = ho_lee_setup
    with pytest.raises(TolUnreachable) as exc:
        adaptive_price(m, pay, g, rule, "efd", 1e-12, 32, 32)
    assert exc.value.estimate.M == 32
    with pytest.raises(ValueError):
        adaptive_price(m, pay, g, rule, "efd", 0.0, 32, 32)
