"""Lifetime problem: options sold back-to-back with capacity degradation.

The continuation value on ``[x_star, b)`` is always a constant multiple of
``phi``, so the whole problem reduces to the scalar ``y = V(x_star)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diffusion import EigenPair, classify_Lc
from .optim import left_grid, maximize_left_of
from .payoff import ContractError, ContractParams, check_sustainability, single_payoff, state_star
from .single import SingleSolution, solve_single

# relative tolerance used when comparing one and two operator steps
REGIME_RTOL = 1e-9
VERIFY_RTOL = 1e-6


class LifetimeError(RuntimeError):
    """The lifetime problem could not be solved as requested."""


@dataclass(frozen=True)
class LifetimeSolution:
    """Lifetime value ``y_star = V(x_star)`` with its purchase threshold (state units)."""

    y_star: float
    x_check: Optional[float]
    regime: str
    rho_bound: Optional[float]
    residual: float
    method: str
    pair: EigenPair = field(repr=False)
    contract: ContractParams = field(repr=False)

    def value_at(self, x):
        x = np.asarray(x, dtype=float)
        if math.isinf(self.y_star):
            out = np.full(x.shape, math.inf)
        else:
            if self.x_check is not None and np.any(x < self.x_check - 1e-12 * max(1.0, abs(self.x_check))):
                raise ValueError("lifetime value is only available on [x_check, b)")
            xs = state_star(self.pair, self.contract)
            out = self.y_star * np.exp(self.pair.log_phi(x) - self.pair.log_phi(xs))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def price_check(self) -> Optional[float]:
        return None if self.x_check is None else float(self.pair.model.price(self.x_check))

    def to_dict(self) -> dict:
        if math.isinf(self.y_star):
            return {"case": "C", "value": "infinite", "regime": self.regime}
        return {"y_star": self.y_star, "x_check": self.x_check, "price_check": self.price_check,
                "regime": self.regime, "rho_bound": self.rho_bound, "residual": self.residual,
                "method": self.method}


def _log_ratios(pair: EigenPair, c: ContractParams, z):
    xs = state_star(pair, c)
    return pair.log_psi(z) - pair.log_psi(xs), pair.log_phi(z) - pair.log_phi(xs)


def construction_objective(pair: EigenPair, c: ContractParams, z):
    """``y(z)``: lifetime value at ``x_star`` of buying at every passage to ``z``.

    Solves ``y = phi*/phi(z) (h(z) + A y psi(z)/psi*)`` for ``y``.
    """
    z = np.asarray(z, dtype=float)
    lpsi, lphi = _log_ratios(pair, c, z)
    with np.errstate(over="ignore", under="ignore"):
        psi_r = np.exp(lpsi)
        num = -np.asarray(pair.model.price(z), dtype=float) + c.p_c + psi_r * c.K_c
        # dividing through by phi(z)/phi* keeps both terms bounded as z -> a
        inv = np.exp(-lphi)
        den = 1.0 - c.A * psi_r * inv
    if np.any(den <= 0):
        raise LifetimeError("construction denominator is not positive; eigenfunction evaluation is unreliable here")
    return num * inv / den


def lifetime_construct(pair: EigenPair, c: ContractParams, *, require_sustainable: bool = True,
                       n_grid: int = 512, rtol: float = 1e-10) -> LifetimeSolution:
    """Maximise ``y(z)`` over ``(a, x_star)``; falls back to value iteration if no positive maximum exists."""
    if require_sustainable:
        rep = check_sustainability(pair, c)
        if not rep.ok:
            raise ContractError(f"sustainability conditions fail: {rep}")
    lc = classify_Lc(pair)
    if lc.tag == "Infinite":
        return LifetimeSolution(math.inf, None, "beta", None, 0.0, "case-C", pair, c)
    m = pair.model
    xs = state_star(pair, c)
    best = maximize_left_of(lambda z: construction_objective(pair, c, z), xs, m.lower,
                            m.length_scale, n_grid=n_grid, rtol=rtol)
    if not (best.value > 0 and math.isfinite(best.value)) or best.at_left_edge:
        trace = value_iterate(pair, c)
        return trace.solution
    y = float(best.value)
    regime = classify_regime(pair, c)
    rho = c.A * math.exp(_log_ratios(pair, c, best.x)[0])
    report = lifetime_verify(pair, c, y, best.x)
    return LifetimeSolution(y, float(best.x), regime, rho, report.residual_fixed_point,
                            "construct", pair, c)


@dataclass(frozen=True)
class VerificationReport:
    residual_maximality: float
    residual_fixed_point: float
    tol: float
    x_best: float

    @property
    def maximality_ok(self) -> bool:
        return self.residual_maximality < self.tol

    @property
    def fixed_point_ok(self) -> bool:
        return self.residual_fixed_point < self.tol

    @property
    def ok(self) -> bool:
        return self.maximality_ok and self.fixed_point_ok


def lifetime_verify(pair: EigenPair, c: ContractParams, y: float, x_hat: float,
                    tol: float = VERIFY_RTOL) -> VerificationReport:
    """Check that ``(y, x_hat)`` solves the scalar fixed-point system.

    (i) ``x_hat`` maximises ``H(., y)/phi`` over ``(a, x_star)`` where
    ``H(x, y) = h(x) + A y psi(x)/psi*``; (ii) ``y = phi*/phi(x_hat) H(x_hat, y)``.
    Both residuals are relative.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    m = pair.model
    xs = state_star(pair, c)

    def ratio(x):
        lpsi, lphi = _log_ratios(pair, c, x)
        with np.errstate(over="ignore", under="ignore"):
            return (single_payoff(pair, c, x) + c.A * y * np.exp(lpsi)) * np.exp(-pair.log_phi(x))

    best = maximize_left_of(ratio, xs, m.lower, m.length_scale, rtol=1e-10)
    at_hat = float(ratio(np.array([x_hat]))[0])
    res_max = (best.value - at_hat) / abs(best.value)
    lpsi, lphi = _log_ratios(pair, c, x_hat)
    implied = math.exp(-lphi) * (single_payoff(pair, c, x_hat) + c.A * y * math.exp(lpsi))
    res_fp = abs(y - implied) / abs(y)
    return VerificationReport(max(res_max, 0.0), res_fp, tol, float(best.x))


class _Operator:
    """Normalised stopping operator restricted to ``y = zeta(x_star)``.

    ``T(y) = phi* max(L_c, max_{x <= x_star} [base(x) + (K_c + A y) carry(x)])``
    with ``base = (-price + p_c)/phi`` and ``carry = psi/(psi* phi)``.
    Values are tabulated once on a coarse grid; the cell around the coarse
    maximum is tabulated finely on first use and the maximum is located by a
    parabola through the three best fine points. Successive iterates move the
    maximiser slowly, so the fine tables are reused across steps.
    """

    def __init__(self, pair: EigenPair, c: ContractParams, n_grid: int = 2048, n_fine: int = 257):
        self.pair, self.c = pair, c
        m = pair.model
        self.xs = state_star(pair, c)
        self.log_phi_star = float(pair.log_phi(self.xs))
        self.lc = classify_Lc(pair).numeric
        self.n_fine = n_fine
        span = 64.0 * m.length_scale
        while True:
            grid = left_grid(self.xs, m.lower, m.length_scale, span, n_grid)
            base, carry = self._parts(grid)
            # widen until the payoff ratio has decayed at the far end
            if not math.isinf(m.lower) or span > 1e12 * m.length_scale:
                break
            if np.argmax(base + c.K_c * carry) > 2:
                break
            span *= 8.0
        self.grid = np.append(grid, self.xs)
        b_star, c_star = self._parts(np.array([self.xs]))
        self.base = np.append(base, b_star)
        self.carry = np.append(carry, c_star)
        self._fine: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        lpsi_rel = self.pair.log_psi(x) - self.pair.log_psi(self.xs)
        lphi = self.pair.log_phi(x)
        with np.errstate(over="ignore", under="ignore"):
            inv_phi = np.exp(-lphi)
            base = (-np.asarray(self.pair.model.price(x), dtype=float) + self.c.p_c) * inv_phi
            carry = np.exp(lpsi_rel - lphi)
        return base, carry

    def _fine_table(self, i: int):
        tab = self._fine.get(i)
        if tab is None:
            lo = self.grid[max(i - 1, 0)]
            hi = self.grid[min(i + 1, len(self.grid) - 1)]
            x = np.linspace(lo, hi, self.n_fine)
            tab = (x, *self._parts(x))
            self._fine[i] = tab
        return tab

    def step(self, y: float) -> tuple[float, float]:
        """Return ``(T(y), argmax)``."""
        w = self.c.K_c + self.c.A * y
        g = self.base + w * self.carry
        fmax = float(np.max(g))
        i = int(np.nonzero(g >= fmax - 1e-12 * abs(fmax))[0][-1])
        x, b, k = self._fine_table(i)
        gf = b + w * k
        j = int(np.argmax(gf))
        x_best, f_best = float(x[j]), float(gf[j])
        if 0 < j < len(x) - 1:
            f0, f1, f2 = gf[j - 1], gf[j], gf[j + 1]
            curv = f0 - 2.0 * f1 + f2
            if curv < 0:
                t = 0.5 * (f0 - f2) / curv
                x_best = float(x[j] + t * (x[1] - x[0]))
                f_best = float(f1 - 0.25 * (f0 - f2) * t)
        ratio = max(f_best, self.lc)
        return math.exp(self.log_phi_star) * ratio, x_best


@dataclass
class IterationTrace:
    """Values ``y_n = T^n 0 (x_star)`` and maximisers along a value iteration.

    ``empirical_rate`` is the largest ratio of successive increments after
    the first step and ``tail_bound`` the geometric estimate
    ``rate/(1-rate) |y_n - y_{n-1}|`` of the remaining distance to the limit.
    """

    values: list
    thresholds: list
    converged: bool
    empirical_rate: Optional[float]
    tail_bound: Optional[float] = None
    solution: Optional[LifetimeSolution] = None

    @property
    def iterations(self) -> int:
        return len(self.values) - 1


def value_iterate(pair: EigenPair, c: ContractParams, n_max: int = 100_000,
                  tol: Optional[float] = None, operator: Optional[_Operator] = None) -> IterationTrace:
    """Iterate ``y_{n+1} = T(y_n)`` from ``y_0 = 0`` until ``|y_{n+1} - y_n| < tol``."""
    if tol is None:
        tol = 1e-8 * max(1.0, abs(c.x_star))
    lc = classify_Lc(pair)
    if lc.tag == "Infinite":
        sol = LifetimeSolution(math.inf, None, "beta", None, 0.0, "case-C", pair, c)
        return IterationTrace([0.0, math.inf], [None, None], True, None, 0.0, sol)
    op = operator or _Operator(pair, c)
    ys, xs_ = [0.0], [None]
    converged = False
    rate = None
    last_rate = None
    for _ in range(n_max):
        y_new, x_new = op.step(ys[-1])
        ys.append(y_new)
        xs_.append(x_new)
        d_new = ys[-1] - ys[-2]
        if len(ys) >= 4:
            d_old = ys[-2] - ys[-3]
            if d_old > 0 and d_new > 0:
                last_rate = d_new / d_old
                rate = last_rate if rate is None else max(rate, last_rate)
        if len(ys) >= 3 and abs(d_new) < tol:
            converged = True
            break
    d_last = abs(ys[-1] - ys[-2])
    tail = None
    if last_rate is not None and last_rate < 1:
        tail = last_rate / (1.0 - last_rate) * d_last
    elif d_last == 0:
        tail = 0.0
    sol = None
    y = ys[-1]
    if converged:
        regime = "alpha" if ys[2] - ys[1] > REGIME_RTOL * max(1.0, abs(ys[1])) else "beta"
        on_lc = lc.tag == "Finite" and y <= math.exp(op.log_phi_star) * lc.value * (1 + 1e-12)
        x_check = None if on_lc else xs_[-1]
        rho = None if x_check is None else c.A * math.exp(_log_ratios(pair, c, x_check)[0])
        residual = abs(op.step(y)[0] - y) / max(abs(y), 1e-300)
        sol = LifetimeSolution(y, x_check, regime, rho, residual, "iterate", pair, c)
    return IterationTrace(ys, xs_, converged, rate, tail, sol)


def apply_operator(pair: EigenPair, c: ContractParams, y: float) -> float:
    """One application of the normalised operator to ``zeta = y phi/phi*``, evaluated at ``x_star``."""
    return _Operator(pair, c).step(y)[0]


def classify_regime(pair: EigenPair, c: ContractParams, rtol: float = REGIME_RTOL) -> str:
    """``beta`` iff two operator steps from zero agree with one step at ``x_star``."""
    if classify_Lc(pair).tag == "Infinite":
        return "beta"
    op = _Operator(pair, c)
    y1 = op.step(0.0)[0]
    y2 = op.step(y1)[0]
    return "alpha" if y2 - y1 > rtol * max(1.0, abs(y1)) else "beta"


def lifetime_vs_single(pair: EigenPair, c: ContractParams) -> tuple[LifetimeSolution, SingleSolution]:
    return lifetime_construct(pair, c), solve_single(pair, c)
