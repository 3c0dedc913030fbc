import math

import numpy as np
import pytest

from eimstore.diffusion import BrownianMotion, NegGBM, OU, ShiftedExpStack, make_eigenpair
from eimstore.lifetime import lifetime_construct
from eimstore.payoff import ContractParams
from eimstore.simulate import SimConfig, estimate_lifetime_value, estimate_single_value, simulate_paths
from eimstore.single import solve_single, threshold_policy_value

from conftest import FIG1_CONTRACT, FIG1_MODEL


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_paths=1)
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)


def test_ou_transition_mean():
    model, x0 = OU(1.0, 0.5, 0.8), 2.0
    paths = simulate_paths(model, x0, SimConfig(n_paths=20_000, seed=3, dt=0.01, antithetic=False), n_steps=100)
    end = paths[:, -1]
    want = 0.5 + (x0 - 0.5) * math.exp(-1.0)
    assert abs(end.mean() - want) < 4 * end.std(ddof=1) / math.sqrt(len(end))
    want_var = 0.8 ** 2 * (1 - math.exp(-2.0)) / 2.0
    assert abs(end.var() / want_var - 1) < 0.05


def test_stack_paths_stay_above_floor():
    m = ShiftedExpStack(10.0, 1.0, 1.0, BrownianMotion())
    paths = simulate_paths(m, 12.0, SimConfig(n_paths=500, seed=1, dt=0.01), n_steps=500)
    assert np.all(paths > 10.0)


def test_neg_gbm_paths_stay_negative():
    paths = simulate_paths(NegGBM(0.1, 0.8), -1.0, SimConfig(n_paths=500, seed=1, dt=0.01), n_steps=500)
    assert np.all(paths < 0)


def test_reproducible():
    cfg = SimConfig(n_paths=4000, seed=11)
    a = estimate_single_value(FIG1_MODEL, FIG1_CONTRACT, 20.0, 60.0, cfg)
    b = estimate_single_value(FIG1_MODEL, FIG1_CONTRACT, 20.0, 60.0, cfg)
    assert a == b
    threaded = estimate_single_value(FIG1_MODEL, FIG1_CONTRACT, 20.0, 60.0, SimConfig(n_paths=4000, seed=11, workers=3))
    assert threaded.mean == a.mean


def test_immediate_purchase():
    c = FIG1_CONTRACT
    est = estimate_single_value(FIG1_MODEL, c, 40.0, 40.0, SimConfig(n_paths=2000, seed=5))
    pair = make_eigenpair(FIG1_MODEL, c.r)
    # buying at t = 0 books -40 + p_c undiscounted and leaves only the utilisation leg random
    want = threshold_policy_value(pair, c, 40.0, 40.0)
    assert abs(est.z_score(want)) < 4


def test_far_threshold_near_zero():
    est = estimate_single_value(FIG1_MODEL, FIG1_CONTRACT, -150.0, 60.0, SimConfig(n_paths=2000, seed=5))
    assert est.mean == 0.0 and est.n_unfinished == est.n_effective


def test_single_matches_analytic_small():
    c = FIG1_CONTRACT
    pair = make_eigenpair(FIG1_MODEL, c.r)
    sol = solve_single(pair, c)
    est = estimate_single_value(FIG1_MODEL, c, sol.price_check, 60.0, SimConfig(n_paths=40_000, seed=21))
    assert abs(est.z_score(sol.value_at(60.0))) < 3


def test_lifetime_with_tiny_degradation_is_single():
    model = OU(2.0, 1.0, 1.5)
    c = ContractParams(2.5, 0.5, 1.0, 0.2, A=1e-9)
    pair = make_eigenpair(model, c.r)
    x = solve_single(pair, c).price_check
    cfg = SimConfig(n_paths=20_000, seed=4)
    life = estimate_lifetime_value(model, c, x, c.x_star, cfg)
    single = estimate_single_value(model, c, x, c.x_star, cfg)
    assert abs(life.mean - single.mean) < 1e-6 * abs(single.mean) + 1e-12


def test_lifetime_matches_analytic_and_seeds_agree():
    model = OU(2.0, 1.0, 1.5)
    c = ContractParams(2.5, 0.5, 1.0, 0.2, A=0.9)
    pair = make_eigenpair(model, c.r)
    sol = lifetime_construct(pair, c)
    a = estimate_lifetime_value(model, c, sol.price_check, c.x_star, SimConfig(n_paths=20_000, seed=1))
    b = estimate_lifetime_value(model, c, sol.price_check, c.x_star, SimConfig(n_paths=20_000, seed=2))
    assert abs(a.z_score(sol.y_star)) < 3
    assert abs(a.mean - b.mean) < 4 * math.hypot(a.stderr, b.stderr)
    # starting above x_star adds one discounted leg
    above = estimate_lifetime_value(model, c, sol.price_check, 3.5, SimConfig(n_paths=20_000, seed=3))
    assert abs(above.z_score(float(sol.value_at(3.5)))) < 3
