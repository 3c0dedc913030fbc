"""Optimal purchase timing for an energy store that backs balancing-energy call options."""

from .diffusion import (BrownianMotion, EigenPair, LcClassification, ModelError, NegGBM, OU,
                        ShiftedExpStack, classify_Lc, hitting_discount, make_eigenpair)
from .payoff import ContractError, ContractParams, check_sustainability, single_payoff
from .single import SingleSolution, solve_single, threshold_policy_value, threshold_sweep
from .lifetime import (LifetimeSolution, classify_regime, lifetime_construct, lifetime_verify,
                       value_iterate)
from .stack import classify_stack_stopping_set, solve_stack, verify_stopping_set
from .simulate import PolicyEstimate, SimConfig, estimate_lifetime_value, estimate_single_value
from .calibrate import DataError, OuFit, PriceSeries, fit_ou_mle, read_price_csv

__version__ = "0.1.0"
