import math

import numpy as np
import pytest

from eimstore.diffusion import BrownianMotion, OU, ShiftedExpStack
from eimstore.payoff import ContractParams
from eimstore.stack import (EXCLUDED, HALF_LINE, INTERVAL, classify_stack_stopping_set, eta, solve_stack,
                            stack_sustainability, verify_stopping_set)

BM = BrownianMotion()

# (label, stack args, contract args, strict, expected shape)
FIXTURES = [
    ("bm-1(i)", (10, 1, 0.5, BM), (None, 5, 20, 0.5), True, EXCLUDED),
    ("bm-1(ii)", (10, 1, 0.5, BM), (None, 15, 20, 0.5), True, HALF_LINE),
    ("bm-2(i)", (10, 1, 2, BM), (None, 12, 30, 0.5), True, HALF_LINE),
    ("bm-2(ii)", (10, 1, 2, BM), (None, 9.9, 50, 0.5), True, INTERVAL),
    ("bm-3", (10, 1, 1, BM), (None, 12, 3, 0.5), True, HALF_LINE),
    ("bm-3", (10, 1, 1, BM), (None, 8, 5, 0.5), True, EXCLUDED),
    ("ou-1", (10, 1, 1, OU(1, 0, 1)), (None, 12, 30, 0.1), True, HALF_LINE),
    ("ou-2(i)", (10, 1, 1, OU(0.05, 0, 1)), (None, 9, 8, 0.1), True, INTERVAL),
    ("ou-2(i)", (10, 1, 1, OU(0.05, 0, 1)), (None, -20, 8, 0.1), False, EXCLUDED),
    ("ou-2(ii)", (10, 5, 1, OU(0.5, 0, 1)), (None, 9, 37, 0.1), True, INTERVAL),
    ("ou-2(ii)", (10, 1, 1, OU(1, 0, 1)), (None, 0, 8, 0.1), True, EXCLUDED),
]
# exercise levels given as imbalance states
Z_STAR = [8, 8, 2, 2, 2, 2, 4, 2, 2, 2, 2]


def build(i):
    label, sargs, cargs, strict, shape = FIXTURES[i]
    m = ShiftedExpStack(*sargs)
    x_star = float(m.price(Z_STAR[i]))
    c = ContractParams(x_star, cargs[1], cargs[2], cargs[3], strict=strict)
    return label, m, c, shape


@pytest.mark.parametrize("i", range(len(FIXTURES)))
def test_branch_outcome(i):
    label, m, c, shape = build(i)
    got = classify_stack_stopping_set(m, c)
    assert got.branch == label and got.tag == shape


@pytest.mark.parametrize("i", [i for i, f in enumerate(FIXTURES) if f[4] != EXCLUDED])
@pytest.mark.parametrize("lifetime", [False, True])
def test_value_majorant(i, lifetime):
    _, m, c, shape = build(i)
    sol = solve_stack(m, c, lifetime=lifetime)
    check = verify_stopping_set(sol)
    assert check.ok, check
    assert (sol.z_hat0 is not None) == (shape == INTERVAL)


@pytest.mark.parametrize("i", [i for i, f in enumerate(FIXTURES) if f[4] != EXCLUDED])
def test_lifetime_threshold_not_below_single(i):
    _, m, c, _ = build(i)
    assert solve_stack(m, c, lifetime=True).z_hat >= solve_stack(m, c).z_hat - 1e-9


@pytest.mark.parametrize("i", [i for i, f in enumerate(FIXTURES) if f[4] == EXCLUDED])
def test_excluded_cases_fail_profitability(i):
    _, m, c, _ = build(i)
    assert not stack_sustainability(m, c).s1_star


@pytest.mark.parametrize("i", [1, 2, 3, 4])
def test_price_coordinates_agree(i):
    # X - D is a geometric Brownian motion whose eigenfunctions are powers of (x - D)
    _, m, c, _ = build(i)
    g = math.sqrt(2 * c.r) / m.b
    x = m.D + np.exp(np.linspace(math.log(1e-6), math.log(c.x_star - m.D), 400_001))[:-1]
    psi = lambda v: (v - m.D) ** g
    h = -x + c.p_c + c.K_c * psi(x) / psi(c.x_star)
    ratio = h * (x - m.D) ** g
    x_brute = x[np.argmax(ratio)]
    sol = solve_stack(m, c)
    assert abs(float(m.price(sol.z_hat)) - x_brute) < 1e-4 * (c.x_star - m.D)


def test_ou_half_line_root():
    _, m, c, _ = build(6)
    shape = classify_stack_stopping_set(m, c)
    u = shape.inflection["u"]
    assert abs(eta(m, c, u)) < 1e-8
    assert eta(m, c, u - 0.5) < 0 < eta(m, c, u + 0.5)


def test_sustainability_shortcuts():
    m = ShiftedExpStack(10.0, 1.0, 1.0, BM)
    x_star = float(m.price(2.0))
    rep = stack_sustainability(m, ContractParams(x_star, 11.0, 0.0, 0.5))
    assert rep.s1_star and rep.s1_method == "premium-above-floor"
    assert not stack_sustainability(m, ContractParams(x_star, 10.0, 0.0, 0.5)).s1_star


def test_exercise_level_above_floor():
    m = ShiftedExpStack(10.0, 1.0, 1.0, BM)
    with pytest.raises(ValueError):
        classify_stack_stopping_set(m, ContractParams(9.0, 1.0, 1.0, 0.5))
