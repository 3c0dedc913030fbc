import math

import numpy as np
import pytest

from eimstore.diffusion import NegGBM, OU, make_eigenpair
from eimstore.lifetime import (apply_operator, classify_regime, construction_objective, lifetime_construct,
                               lifetime_verify, value_iterate)
from eimstore.payoff import ContractParams
from eimstore.single import solve_single, threshold_policy_value

from conftest import FIG1_CONTRACT, rel

SMALL_MODEL = OU(2.0, 1.0, 1.5)


def small_contract(A=0.9, **kw):
    args = dict(x_star=2.5, p_c=0.5, K_c=1.0, r=0.2, A=A)
    args.update(kw)
    return ContractParams(**args)


@pytest.fixture(scope="module")
def small_pair():
    return make_eigenpair(SMALL_MODEL, 0.2)


def test_first_iterate_is_single_value(small_pair):
    c = small_contract()
    single = solve_single(small_pair, c)
    assert rel(apply_operator(small_pair, c, 0.0), single.value_at(c.x_star)) < 1e-9


def test_construct_verifies(small_pair):
    c = small_contract()
    sol = lifetime_construct(small_pair, c)
    rep = lifetime_verify(small_pair, c, sol.y_star, sol.x_check)
    assert rep.ok and sol.residual < 1e-6
    assert not lifetime_verify(small_pair, c, 1.01 * sol.y_star, sol.x_check).fixed_point_ok
    moved = sol.x_check + 0.1 * (c.x_star - sol.x_check)
    assert not lifetime_verify(small_pair, c, sol.y_star, moved).maximality_ok


def test_iteration_matches_construction(small_pair):
    c = small_contract()
    sol = lifetime_construct(small_pair, c)
    trace = value_iterate(small_pair, c, tol=1e-12)
    assert trace.converged
    assert rel(trace.values[-1], sol.y_star) < 1e-8
    assert trace.empirical_rate <= sol.rho_bound + 0.01
    # iterates increase monotonically from zero
    assert np.all(np.diff(trace.values) >= -1e-12 * sol.y_star)


def test_lifetime_exceeds_single(small_pair):
    c = small_contract()
    life = lifetime_construct(small_pair, c)
    single = solve_single(small_pair, c)
    assert classify_regime(small_pair, c) == "alpha"
    assert life.y_star > single.value_at(c.x_star)
    # continuing to trade makes the purchase more attractive, so the threshold rises
    assert life.x_check >= single.x_check


def test_small_degradation_limit(small_pair):
    c = small_contract(A=1e-12)
    single = solve_single(small_pair, c)
    z = np.linspace(-3, 2, 11)
    y0 = threshold_policy_value(small_pair, c, z, np.full_like(z, c.x_star))
    assert np.allclose(construction_objective(small_pair, c, z), y0, rtol=1e-10)
    life = lifetime_construct(small_pair, c)
    assert rel(life.y_star, single.value_at(c.x_star)) < 1e-10
    trace = value_iterate(small_pair, c, tol=1e-14)
    diff = trace.values[2] - trace.values[1]
    # the regime tag follows the size of the second increment
    assert (classify_regime(small_pair, c) == "alpha") == (diff > 1e-9 * max(1.0, trace.values[1]))


def test_value_function_shape(small_pair):
    c = small_contract()
    sol = lifetime_construct(small_pair, c)
    x = np.linspace(sol.x_check, 6.0, 50)
    v = sol.value_at(x)
    assert np.all(np.diff(v) < 0)
    assert sol.value_at(c.x_star) == pytest.approx(sol.y_star)
    with pytest.raises(ValueError):
        sol.value_at(sol.x_check - 0.5)


def test_fig1_regime_alpha(fig1_pair):
    assert classify_regime(fig1_pair, FIG1_CONTRACT) == "alpha"


def test_neg_gbm_case_b_is_beta():
    r = 0.04
    pair = make_eigenpair(NegGBM(r, 0.3), r)
    c = ContractParams(-1.0, -3.0, 1.0, r, strict=False)
    assert solve_single(pair, c, require_sustainable=False).case == "B"
    assert classify_regime(pair, c) == "beta"
    trace = value_iterate(pair, c, tol=1e-12)
    assert trace.converged and trace.solution.regime == "beta"
    assert trace.values[-1] == pytest.approx(1.0, rel=1e-12)  # L_c * phi(x*) with phi(x*) = 1


def test_case_c_lifetime_infinite():
    r = 0.04
    pair = make_eigenpair(NegGBM(0.06, 0.3), r)
    sol = lifetime_construct(pair, ContractParams(-1.0, -3.0, 1.0, r, strict=False), require_sustainable=False)
    assert math.isinf(sol.y_star) and sol.to_dict()["value"] == "infinite"


def test_fitted_model_threshold(fitted_pair):
    from conftest import fitted_contract
    sol = lifetime_construct(fitted_pair, fitted_contract())
    # frozen from the first solve of this configuration
    assert sol.x_check == pytest.approx(-70.147, abs=1e-2)
    assert sol.y_star == pytest.approx(679743.35, rel=1e-7)
