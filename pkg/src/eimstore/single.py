"""Single-option problem: case classification, purchase threshold and value function."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diffusion import EigenPair, LcClassification, classify_Lc
from .optim import Maximum, OptimizationError, maximize_left_of
from .payoff import ContractError, ContractParams, check_sustainability, single_payoff, state_star



@dataclass(frozen=True)
class SingleSolution:
    """Optimal purchase policy for one option.

    ``x_check`` (a state) and ``ratio_max`` are only set in case A, where the
    value on ``[x_check, b)`` is ``phi(x) * ratio_max``. ``log_ratio_max``
    keeps the ratio when it is below the floating-point range.
    """

    case: str
    pair: EigenPair = field(repr=False)
    contract: ContractParams
    lc: LcClassification
    x_check: Optional[float] = None
    ratio_max: Optional[float] = None
    search: Optional[Maximum] = field(default=None, repr=False)
    log_ratio_max: Optional[float] = None

    def value_at(self, x):
        x = np.asarray(x, dtype=float)
        if self.case == "C":
            out = np.full(x.shape, math.inf)
        elif self.case == "B":
            out = self.lc.value * self.pair.phi(x)
        else:
            if np.any(x < self.x_check - 1e-12 * max(1.0, abs(self.x_check))):
                raise ValueError("value function is only available on [x_check, b)")
            if self.log_ratio_max is not None:
                out = np.exp(self.log_ratio_max + np.asarray(self.pair.log_phi(x)))
            else:
                out = self.ratio_max * np.asarray(self.pair.phi(x))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def price_check(self) -> Optional[float]:
        """Purchase threshold in price units."""
        return None if self.x_check is None else float(self.pair.model.price(self.x_check))

    def to_dict(self) -> dict:
        if self.case == "C":
            return {"case": "C", "value": "infinite"}
        out = {"case": self.case, "L_c": self.lc.tag}
        if self.case == "A":
            out.update(x_check=self.x_check, price_check=self.price_check, ratio_max=self.ratio_max)
        else:
            out["L_c_value"] = self.lc.value
        xs = state_star(self.pair, self.contract)
        out["value_at_x_star"] = float(self.value_at(xs))
        return out


def payoff_ratio(pair: EigenPair, c: ContractParams, x):
    """``h(x) / phi(x)``."""
    with np.errstate(over="ignore", under="ignore"):
        return single_payoff(pair, c, x) * np.exp(-np.asarray(pair.log_phi(x)))


def log_payoff_ratio(pair: EigenPair, c: ContractParams, x):
    """``log(h/phi)`` where ``h > 0`` and ``-inf`` elsewhere."""
    h = np.asarray(single_payoff(pair, c, x), dtype=float)
    pos = h > 0
    return np.where(pos, np.log(np.where(pos, h, 1.0)) - np.asarray(pair.log_phi(x)), -np.inf)


def maximize_payoff_ratio(pair: EigenPair, c: ContractParams, **kw) -> Maximum:
    """Rightmost maximiser of ``h/phi`` over ``(a, x_star)``; ``value`` is the linear ratio."""
    xs = state_star(pair, c)
    m = pair.model
    return maximize_left_of(lambda x: payoff_ratio(pair, c, x), xs, m.lower, m.length_scale, **kw)


def maximize_log_payoff_ratio(pair: EigenPair, c: ContractParams, **kw) -> Optional[Maximum]:
    """Maximiser of ``log(h/phi)``; None when ``h`` is nowhere positive on the search grid."""
    xs = state_star(pair, c)
    m = pair.model
    try:
        return maximize_left_of(lambda x: log_payoff_ratio(pair, c, x), xs, m.lower, m.length_scale, **kw)
    except OptimizationError:
        return None


def solve_single(pair: EigenPair, c: ContractParams, *, require_sustainable: bool = True,
                 **opt) -> SingleSolution:
    """Classify the single-option problem and solve it.

    ``L_c`` infinite gives case C; otherwise ``h/phi`` is maximised over
    ``(a, x_star)`` and compared with ``L_c``. The search runs on the log of
    the ratio so thresholds far in the tail of ``phi`` are still found.
    """
    if require_sustainable:
        rep = check_sustainability(pair, c)
        if not rep.ok:
            raise ContractError(f"sustainability conditions fail: {rep}")
    lc = classify_Lc(pair)
    if lc.tag == "Infinite":
        return SingleSolution("C", pair, c, lc)
    best = maximize_log_payoff_ratio(pair, c, **opt)
    if best is None:
        if lc.tag == "Finite":
            return SingleSolution("B", pair, c, lc, search=maximize_payoff_ratio(pair, c, **opt))
        raise ContractError("no positive payoff ratio found; S1* fails for this contract")
    # the ratio tends to L_c at the boundary, so any maximum short of L_c
    # (or one that runs off to the boundary) leaves the supremum unattained
    if lc.tag == "Finite" and (best.value < math.log(lc.value) or best.at_left_edge):
        return SingleSolution("B", pair, c, lc, search=best)
    return SingleSolution("A", pair, c, lc, best.x, math.exp(best.value), best, best.value)


def threshold_policy_value(pair: EigenPair, c: ContractParams, x_tilde, x):
    """Value at ``x`` of buying at the first passage to ``x_tilde``: ``phi(x) h(x_tilde)/phi(x_tilde)``."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < x_tilde):
        raise ValueError("threshold policy value is only defined for x >= x_tilde")
    out = single_payoff(pair, c, x_tilde) * np.exp(pair.log_phi(x) - pair.log_phi(x_tilde))
    return float(out) if np.ndim(out) == 0 else out


def threshold_sweep(pair: EigenPair, c: ContractParams, thresholds, x) -> np.ndarray:
    """Threshold-policy values at ``x`` for each candidate threshold (states must be ``<= x``)."""
    thresholds = np.asarray(thresholds, dtype=float)
    return np.asarray(threshold_policy_value(pair, c, thresholds, np.full_like(thresholds, x)))
