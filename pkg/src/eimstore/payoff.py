"""Contract terms, single-option and normalised lifetime payoffs, sustainability checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .diffusion import EigenPair


class ContractError(ValueError):
    """Contract parameters violate the standing assumptions."""


@dataclass(frozen=True)
class ContractParams:
    """Call option on one unit of physically covered balancing energy.

    Attributes
    ----------
    x_star : price level at which the system operator exercises.
    p_c : premium received when the option is sold.
    K_c : utilisation payment received at exercise.
    r : discount rate (per unit of the model's time).
    A : capacity retained after each charge/discharge cycle, in (0, 1).
    strict : when False, non-negative premia and ``p_c + K_c < x_star`` are
        not enforced (counterexample configurations).
    """

    x_star: float
    p_c: float
    K_c: float
    r: float
    A: float = 0.9999
    strict: bool = True

    def __post_init__(self):
        if not self.r > 0:
            raise ContractError(f"rate must be positive, got {self.r}")
        if not 0 < self.A < 1:
            raise ContractError(f"degradation factor must lie in (0, 1), got {self.A}")
        if self.strict:
            if self.p_c < 0 or self.K_c < 0:
                raise ContractError("premium and utilisation payment must be non-negative")
            if not self.s2_star:
                raise ContractError(
                    f"p_c + K_c = {self.p_c + self.K_c} must be below x_star = {self.x_star}"
                )

    @property
    def s2_star(self) -> bool:
        return self.p_c + self.K_c < self.x_star

    @property
    def total_premium(self) -> float:
        return self.p_c + self.K_c


def state_star(pair: EigenPair, c: ContractParams) -> float:
    """Exercise level expressed in the model's state coordinate."""
    return float(pair.model.state(c.x_star))


def _psi_ratio(pair: EigenPair, x, xs: float):
    return np.exp(pair.log_psi(x) - pair.log_psi(xs))


def single_payoff(pair: EigenPair, c: ContractParams, x):
    """Payoff ``h`` of buying energy and selling the option at state ``x``."""
    x = np.asarray(x, dtype=float)
    xs = state_star(pair, c)
    carry = np.where(x < xs, _psi_ratio(pair, np.minimum(x, xs), xs), 1.0)
    out = -np.asarray(pair.model.price(x), dtype=float) + c.p_c + c.K_c * carry
    return float(out) if out.ndim == 0 else out


def normalized_payoff(pair: EigenPair, c: ContractParams, zeta_at_xstar: float,
                      zeta_right: Optional[Callable] = None, x=None):
    """Lifetime payoff with continuation value ``zeta``.

    ``zeta_at_xstar`` is the continuation value at the exercise level and
    ``zeta_right`` evaluates it on ``[x_star, b)``; the latter defaults to the
    constant-times-phi extension through ``zeta_at_xstar``.
    """
    if zeta_at_xstar < 0:
        raise ContractError("continuation value must be non-negative")
    x = np.asarray(x, dtype=float)
    xs = state_star(pair, c)
    if zeta_right is None:
        def zeta_right(v):
            return zeta_at_xstar * np.exp(pair.log_phi(v) - pair.log_phi(xs))
    left = single_payoff(pair, c, x) + c.A * zeta_at_xstar * _psi_ratio(pair, np.minimum(x, xs), xs)
    right_x = np.maximum(x, xs)
    zr = np.asarray(zeta_right(right_x), dtype=float)
    if np.any(zr < 0):
        raise ContractError("continuation value must be non-negative")
    right = single_payoff(pair, c, right_x) + c.A * zr
    out = np.where(x < xs, left, right)
    return float(out) if out.ndim == 0 else out


def check_admissible(pair: EigenPair, c: ContractParams, zeta_right: Callable,
                     grid: np.ndarray) -> bool:
    """``zeta >= 0`` and ``zeta/phi`` non-increasing on a grid in ``[x_star, b)``."""
    xs = state_star(pair, c)
    g = np.sort(np.asarray(grid, dtype=float))
    g = g[g >= xs]
    vals = np.asarray(zeta_right(g), dtype=float)
    ratio = vals / pair.phi(g)
    return bool(np.all(vals >= 0) and np.all(np.diff(ratio) <= 1e-12 * np.maximum(1.0, np.abs(ratio[:-1]))))


@dataclass(frozen=True)
class SustainabilityReport:
    s1_star: bool
    sup_h: float
    s1_method: str
    s2_star: bool
    probe_points: int = 0

    @property
    def ok(self) -> bool:
        return self.s1_star and self.s2_star


def check_sustainability(pair: EigenPair, c: ContractParams, n_probe: int = 256) -> SustainabilityReport:
    """Evaluate the two sustainability conditions.

    Positive expected profit holds outright when the price is unbounded
    below, or for a price floor ``D`` when ``p_c > D``; otherwise ``sup h``
    is probed on a log-spaced grid toward the left boundary together with
    the limit of ``h`` at that boundary.
    """
    m = pair.model
    if math.isinf(m.price_lower):
        return SustainabilityReport(True, math.inf, "unbounded-below", c.s2_star)
    floor = m.price_lower
    if c.p_c > floor and c.K_c >= 0:
        return SustainabilityReport(True, c.p_c - floor, "premium-above-floor", c.s2_star)
    xs = state_star(pair, c)
    if math.isinf(m.lower):
        grid = xs - np.exp(np.linspace(math.log(1e3 * m.length_scale), math.log(1e-6 * m.length_scale), n_probe))
    else:
        grid = m.lower + (xs - m.lower) * np.exp(-np.linspace(40.0, 1e-6, n_probe))
    with np.errstate(all="ignore"):
        h = single_payoff(pair, c, grid)
    limit = c.p_c - floor  # psi(a+) = 0 removes the utilisation term
    sup_h = float(max(np.nanmax(h), limit))
    return SustainabilityReport(sup_h > 0, sup_h, "probe", c.s2_star, n_probe)
