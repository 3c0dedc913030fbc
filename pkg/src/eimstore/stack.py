"""Shifted-exponential price stacks ``X = D + d exp(bZ)`` over Brownian or OU imbalance.

The stopping-set shape follows from the sign of ``(L - r)`` applied to the
payoff, which is a function of ``z`` alone to the left of ``z_star``. All
quantities here are in imbalance coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diffusion import BrownianMotion, EigenPair, OU, ShiftedExpStack, make_eigenpair
from .lifetime import LifetimeSolution, lifetime_construct
from .optim import maximize_left_of
from .payoff import ContractParams, check_sustainability, normalized_payoff, state_star
from .single import SingleSolution, solve_single

StackModel = ShiftedExpStack

HALF_LINE = "HalfLine"
INTERVAL = "Interval"
EXCLUDED = "Excluded"


@dataclass(frozen=True)
class StoppingSetShape:
    """Shape of the purchase region ``Gamma`` for the single-option problem.

    ``branch`` names the sign pattern that decided the shape, ``z_hat`` and
    ``z_hat0`` are the right and (for intervals) left end points, and
    ``inflection`` holds ``B``, ``z_diamond`` or the roots ``u`` of ``eta``.
    """

    tag: str
    branch: str
    z_hat: Optional[float] = None
    z_hat0: Optional[float] = None
    inflection: dict = field(default_factory=dict)


def generator_payoff_bm(m: StackModel, c: ContractParams, z):
    """``(L - r)(-f + p_c)`` for a Brownian imbalance."""
    z = np.asarray(z, dtype=float)
    return m.d * np.exp(m.b * z) * (c.r - 0.5 * m.b ** 2) + c.r * (m.D - c.p_c)


def eta(m: StackModel, c: ContractParams, z):
    """``(L - r)(-f + p_c)`` for a zero-mean unit-volatility OU imbalance."""
    z = np.asarray(z, dtype=float)
    th = m.inner.theta
    return m.d * np.exp(m.b * z) * (m.b * (th * z - 0.5 * m.b) + c.r) + c.r * (m.D - c.p_c)


def z_diamond(m: StackModel, c: ContractParams) -> float:
    """Unique critical point of ``eta``."""
    return ((0.5 * m.b ** 2 - c.r) / m.inner.theta - 1.0) / m.b


def bisect_root(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 400) -> float:
    flo = f(lo)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eta_root(m: StackModel, c: ContractParams, side: str, tol: float = 1e-10) -> float:
    """Root of ``eta`` left or right of ``z_diamond``, bracketed by geometric steps."""
    zd = z_diamond(m, c)
    f = lambda z: float(eta(m, c, z))
    if f(zd) >= 0:
        raise ValueError("eta has no sign change: its minimum is non-negative")
    step = 1.0 / m.b
    sign = -1.0 if side == "left" else 1.0
    far = zd + sign * step
    for _ in range(200):
        if f(far) > 0:
            break
        step *= 2.0
        far = zd + sign * step
    else:
        raise ValueError(f"no root of eta found to the {side} of z_diamond")
    lo, hi = (far, zd) if side == "left" else (zd, far)
    return bisect_root(f, lo, hi, tol)


def _branch(m: StackModel, c: ContractParams) -> tuple[str, str, dict]:
    zs = float(m.state(c.x_star))
    if isinstance(m.inner, BrownianMotion):
        k = c.r - 0.5 * m.b ** 2
        info = {}
        if math.isclose(k, 0.0, abs_tol=1e-14 * max(1.0, c.r)):
            return (EXCLUDED if m.D > c.p_c else HALF_LINE), "bm-3", info
        if c.p_c != m.D:
            info["B"] = math.log(c.r * (c.p_c - m.D) / (m.d * k)) / m.b if (c.p_c - m.D) / k > 0 else None
        if k > 0:
            return (HALF_LINE, "bm-1(ii)", info) if c.p_c > m.D else (EXCLUDED, "bm-1(i)", info)
        return (HALF_LINE, "bm-2(i)", info) if c.p_c >= m.D else (INTERVAL, "bm-2(ii)", info)

    zd = z_diamond(m, c)
    info = {"z_diamond": zd, "eta_z_diamond": float(eta(m, c, zd)), "eta_z_star": float(eta(m, c, zs))}
    if c.p_c >= m.D:
        info["u"] = eta_root(m, c, "right")
        return HALF_LINE, "ou-1", info
    if zd >= zs:
        if info["eta_z_star"] >= 0:
            return EXCLUDED, "ou-2(i)", info
        info["u"] = eta_root(m, c, "left")
        return INTERVAL, "ou-2(i)", info
    if info["eta_z_diamond"] >= 0:
        return EXCLUDED, "ou-2(ii)", info
    info["u"] = eta_root(m, c, "left")
    if info["eta_z_star"] > 0:
        info["u_right"] = eta_root(m, c, "right")
    return INTERVAL, "ou-2(ii)", info


def stack_payoff(pair: EigenPair, c: ContractParams, z, y: float = 0.0):
    """Payoff with lifetime continuation ``y phi/phi*`` on ``[z_star, b)``; ``y = 0`` gives the single option."""
    return normalized_payoff(pair, c, y, x=z)


def left_endpoint(pair: EigenPair, c: ContractParams, z_hat: float, y: float = 0.0) -> float:
    """Left end of an interval stopping set: leftmost maximiser of payoff/psi on ``(-inf, z_hat]``.

    This is the tangency point of the chord from ``(0, L_c = 0)`` to the
    payoff curve in ``F = psi/phi`` coordinates.
    """
    m = pair.model

    def ratio(z):
        with np.errstate(over="ignore", under="ignore"):
            return stack_payoff(pair, c, z, y) * np.exp(-np.asarray(pair.log_psi(z)))

    # a tiny step past z_hat keeps z_hat itself inside the search interval
    right = z_hat + 1e-9 * m.length_scale
    best = maximize_left_of(ratio, right, m.lower, m.length_scale, prefer="left", rtol=1e-10)
    return float(min(best.x, z_hat))


def classify_stack_stopping_set(m: StackModel, c: ContractParams) -> StoppingSetShape:
    """Decide half-line, interval or excluded from the sign pattern and locate the end points."""
    if c.x_star <= m.D:
        raise ValueError("exercise level must lie above the stack floor D")
    tag, branch, info = _branch(m, c)
    if tag == EXCLUDED:
        return StoppingSetShape(tag, branch, inflection=info)
    pair = make_eigenpair(m, c.r)
    sol = solve_single(pair, c, require_sustainable=False)
    z0 = left_endpoint(pair, c, sol.x_check) if tag == INTERVAL else None
    return StoppingSetShape(tag, branch, sol.x_check, z0, info)


@dataclass(frozen=True)
class StackSolution:
    """Single or lifetime solution together with the stopping-set geometry."""

    shape: StoppingSetShape
    z_hat: float
    z_hat0: Optional[float]
    y: float
    pair: EigenPair = field(repr=False)
    contract: ContractParams = field(repr=False)
    inner: object = field(repr=False)

    @property
    def lifetime(self) -> bool:
        return isinstance(self.inner, LifetimeSolution)

    def payoff(self, z):
        return stack_payoff(self.pair, self.contract, z, self.y if self.lifetime else 0.0)

    def value(self, z):
        """Value function on the whole line, assembled from the three pieces."""
        z = np.asarray(z, dtype=float)
        pair = self.pair
        h_hat = float(self.payoff(self.z_hat))
        out = h_hat * np.exp(pair.log_phi(z) - pair.log_phi(self.z_hat))
        stop_lo = -math.inf if self.z_hat0 is None else self.z_hat0
        inside = (z >= stop_lo) & (z <= self.z_hat)
        out = np.where(inside, self.payoff(z), out)
        if self.z_hat0 is not None:
            h0 = float(self.payoff(self.z_hat0))
            left = h0 * np.exp(pair.log_psi(z) - pair.log_psi(self.z_hat0))
            out = np.where(z < self.z_hat0, left, out)
        return float(out) if out.ndim == 0 else out


def solve_stack(m: StackModel, c: ContractParams, lifetime: bool = False) -> StackSolution:
    """Solve the single (``lifetime=False``) or lifetime problem for a price stack."""
    shape = classify_stack_stopping_set(m, c)
    if shape.tag == EXCLUDED:
        raise ValueError(f"parameters fall in excluded branch {shape.branch}")
    pair = make_eigenpair(m, c.r)
    if not lifetime:
        inner = solve_single(pair, c, require_sustainable=False)
        return StackSolution(shape, shape.z_hat, shape.z_hat0, 0.0, pair, c, inner)
    sol = lifetime_construct(pair, c, require_sustainable=False)
    z0 = left_endpoint(pair, c, sol.x_check, sol.y_star) if shape.tag == INTERVAL else None
    return StackSolution(shape, sol.x_check, z0, sol.y_star, pair, c, sol)


@dataclass(frozen=True)
class MajorantCheck:
    """Comparison of the reported stopping set with the least concave majorant."""

    on_set_max_gap: float
    off_set_min_gap: float
    majorant_violation: float
    n_on: int
    n_off: int
    tol: float

    @property
    def ok(self) -> bool:
        return (self.on_set_max_gap <= self.tol and self.off_set_min_gap > 0
                and self.majorant_violation <= self.tol)


def upper_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least concave majorant of points sorted by ``x``, evaluated at ``x``."""
    idx = []
    for i in range(len(x)):
        while len(idx) >= 2:
            i0, i1 = idx[-2], idx[-1]
            # drop i1 when it lies on or below the chord from i0 to i
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross >= 0:
                idx.pop()
            else:
                break
        idx.append(i)
    return np.interp(x, x[idx], y[idx])


def verify_stopping_set(sol: StackSolution, n: int = 4001, rtol: float = 1e-6) -> MajorantCheck:
    """Check value = payoff on the reported set and value > payoff left of ``z_star`` outside it.

    The reference value is the least concave majorant of ``H = payoff/phi``
    in ``F = psi/phi`` coordinates, anchored at ``(0, L_c = 0)`` and flat
    beyond its maximum.
    """
    pair, c = sol.pair, sol.contract
    zs = state_star(pair, c)
    scale = pair.model.length_scale
    left = (sol.z_hat0 if sol.z_hat0 is not None else sol.z_hat) - 12.0 * scale
    z = np.linspace(left, zs + 4.0 * scale, n)
    logF = pair.log_psi(z) - pair.log_phi(z)
    F = np.exp(logF - logF[-1])  # rescaled; the majorant is invariant to scaling F
    H = sol.payoff(z) * np.exp(-pair.log_phi(z))
    Fx = np.concatenate([[0.0], F])
    Hx = np.concatenate([[0.0], H])
    W = upper_hull(Fx, Hx)
    k = int(np.argmax(W))
    W[k:] = W[k]
    W = W[1:]
    level = np.max(np.abs(H))
    gap = (W - H) / level
    stop_lo = -math.inf if sol.z_hat0 is None else sol.z_hat0
    on = (z >= stop_lo) & (z <= sol.z_hat)
    dz = z[1] - z[0]
    # grid points next to an end point sit within discretisation error of the set
    near = np.abs(z - sol.z_hat) <= 1.5 * dz
    if sol.z_hat0 is not None:
        near |= np.abs(z - sol.z_hat0) <= 1.5 * dz
    off = ~on & ~near & (z < zs)
    return MajorantCheck(
        on_set_max_gap=float(np.max(np.abs(gap[on]))) if on.any() else 0.0,
        off_set_min_gap=float(np.min(gap[off])) if off.any() else math.inf,
        majorant_violation=float(max(0.0, -np.min(gap))),
        n_on=int(on.sum()), n_off=int(off.sum()), tol=rtol)


def stack_sustainability(m: StackModel, c: ContractParams):
    return check_sustainability(make_eigenpair(m, c.r), c)
