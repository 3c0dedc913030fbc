"""Monte Carlo estimates of threshold-policy values, used as an independent check.

Paths are advanced with exact Gaussian transitions in a coordinate where the
volatility is constant (the price for OU, the imbalance for stacks, minus the
log of minus the price for the negative GBM). Level crossings between grid
points are detected with the Brownian-bridge crossing probability.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .diffusion import BrownianMotion, DiffusionModel, ModelError, NegGBM, OU, ShiftedExpStack
from .payoff import ContractParams

PAIRS_PER_BATCH = 5_000
# normals kept per path for replay by its antithetic partner
REPLAY_STEPS = 4_000_000


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings. ``dt`` and ``horizon`` default from the model and rate.

    ``n_paths`` counts individual paths; with antithetic pairing it is
    rounded up to an even number.
    """

    n_paths: int = 200_000
    seed: int = 12345
    dt: Optional[float] = None
    horizon: Optional[float] = None
    antithetic: bool = True
    workers: int = 1
    truncation: float = 0.01

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("need at least two paths for a standard error")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.truncation < 1:
            raise ValueError("truncation level must lie in (0, 1)")


@dataclass(frozen=True)
class PolicyEstimate:
    mean: float
    stderr: float
    n_effective: int
    truncation_bias_bound: float
    n_unfinished: int
    config: dict = field(default_factory=dict)

    def z_score(self, reference: float) -> float:
        return (self.mean - reference) / self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Scheme:
    """Step ``u' = m + a (u - m) + c + s * xi`` in simulation coordinate ``u``."""

    a: float
    m: float
    c: float
    s: float
    dt: float

    @staticmethod
    def build(model: DiffusionModel, dt: float) -> "_Scheme":
        base = model.inner if isinstance(model, ShiftedExpStack) else model
        if isinstance(base, OU):
            a = math.exp(-base.theta * dt)
            s = base.sigma * math.sqrt(-math.expm1(-2.0 * base.theta * dt) / (2.0 * base.theta))
            return _Scheme(a, base.mu, 0.0, s, dt)
        if isinstance(base, BrownianMotion):
            return _Scheme(1.0, 0.0, 0.0, math.sqrt(dt), dt)
        if isinstance(base, NegGBM):
            # u = -log(-x) is a Brownian motion with drift -(mu - sigma^2/2)
            return _Scheme(1.0, 0.0, -(base.mu - 0.5 * base.sigma ** 2) * dt, base.sigma * math.sqrt(dt), dt)
        raise ModelError(f"cannot simulate {model!r}")


def to_sim(model: DiffusionModel, price):
    """Map prices to the simulation coordinate (increasing)."""
    p = np.asarray(price, dtype=float)
    if isinstance(model, NegGBM):
        if np.any(p >= 0):
            raise ModelError("negative GBM prices must be < 0")
        out = -np.log(-p)
    else:
        out = np.asarray(model.state(p), dtype=float)
    return float(out) if out.ndim == 0 else out


def from_sim(model: DiffusionModel, u):
    u = np.asarray(u, dtype=float)
    if isinstance(model, NegGBM):
        return -np.exp(-u)
    return np.asarray(model.price(u), dtype=float)


def default_dt(model: DiffusionModel) -> float:
    base = model.inner if isinstance(model, ShiftedExpStack) else model
    if isinstance(base, OU):
        return 1e-3 / base.theta
    if isinstance(base, NegGBM):
        return 1e-3 / max(base.sigma ** 2, abs(base.mu), 1e-12)
    return 1e-3


def default_horizon(r: float, truncation: float = 0.01) -> float:
    """Smallest ``T`` with ``exp(-r T) <= truncation``."""
    return math.log(1.0 / truncation) / r


def simulate_paths(model: DiffusionModel, x0: float, cfg: SimConfig, n_steps: Optional[int] = None) -> np.ndarray:
    """Price paths on the grid ``k * dt``, shape ``(n_paths, n_steps + 1)``."""
    dt = cfg.dt or default_dt(model)
    if n_steps is None:
        if cfg.horizon is None:
            raise ValueError("give n_steps or a horizon")
        n_steps = int(math.ceil(cfg.horizon / dt))
    sch = _Scheme.build(model, dt)
    n = cfg.n_paths + (cfg.n_paths % 2 if cfg.antithetic else 0)
    rng = np.random.default_rng(cfg.seed)
    if cfg.antithetic:
        half = rng.standard_normal((n // 2, n_steps))
        xi = np.concatenate([half, -half])
    else:
        xi = rng.standard_normal((n, n_steps))
    u = np.empty((n, n_steps + 1))
    u[:, 0] = to_sim(model, x0)
    for k in range(n_steps):
        u[:, k + 1] = sch.m + sch.a * (u[:, k] - sch.m) + sch.c + sch.s * xi[:, k]
    return from_sim(model, u)


@numba.njit(cache=True, nogil=True)
def _passage(rng, u, barrier, down, a, m, c, s, s2inv, k0, max_steps, xi_sign, shared, n_shared):
    """Advance one path until it crosses ``barrier``; returns ``(step time, steps used)``.

    Normals are taken from ``shared`` (with sign ``xi_sign``) while available
    so that antithetic partners reuse the draws of the first path; further
    draws come from ``rng``. A crossing inside a step is dated by linear
    interpolation when the end point is beyond the barrier and at mid-step
    when it is detected by the bridge probability.
    """
    k = k0
    while k < max_steps:
        if k < n_shared:
            xi = xi_sign * shared[k]
        else:
            xi = xi_sign * rng.standard_normal()
        v = m + a * (u - m) + c + s * xi
        if down:
            if v <= barrier:
                return k + (u - barrier) / (u - v), k + 1
            q = 2.0 * (u - barrier) * (v - barrier) * s2inv
        else:
            if v >= barrier:
                return k + (barrier - u) / (v - u), k + 1
            q = 2.0 * (barrier - u) * (barrier - v) * s2inv
        if q < 40.0 and rng.random() < math.exp(-q):
            return k + 0.5, k + 1
        u = v
        k += 1
    return -1.0, k


@numba.njit(cache=True, nogil=True)
def _record(rng, u, k, barrier, down, a, m, c, s, s2inv, max_steps, xi_sign, buf, n_buf):
    """Run ``_passage`` for the first path of a pair, storing its normals in ``buf``."""
    while k < max_steps:
        if k >= buf.shape[0]:
            return -2.0, k, n_buf
        xi = rng.standard_normal()
        buf[k] = xi
        n_buf = k + 1
        v = m + a * (u - m) + c + s * xi
        if down:
            if v <= barrier:
                return k + (u - barrier) / (u - v), k + 1, n_buf
            q = 2.0 * (u - barrier) * (v - barrier) * s2inv
        else:
            if v >= barrier:
                return k + (barrier - u) / (v - u), k + 1, n_buf
            q = 2.0 * (barrier - u) * (barrier - v) * s2inv
        if q < 40.0 and rng.random() < math.exp(-q):
            return k + 0.5, k + 1, n_buf
        u = v
        k += 1
    return -1.0, k, n_buf


@numba.njit(cache=True, nogil=True)
def _cycle_kernel(rng, n_pairs, u0, lo, hi, a, m, c, s, dt, max_steps, antithetic, buf):
    """First passage down to ``lo`` and then up to ``hi`` for each path.

    Returns buy and sell times; ``-1`` marks an event not reached within
    ``max_steps``. The second path of an antithetic pair replays the first
    path's normals with opposite sign (beyond the replay buffer it draws
    fresh ones).
    """
    width = 2 if antithetic else 1
    t_buy = -np.ones(width * n_pairs)
    t_sell = -np.ones(width * n_pairs)
    s2inv = 1.0 / (s * s)
    for p in range(n_pairs):
        n_buf = 0
        for j in range(width):
            idx = width * p + j
            sign = 1.0 if j == 0 else -1.0
            nb = n_buf if j == 1 else 0
            k = 0
            tb = 0.0
            if u0 > lo:
                if j == 0:
                    tb, k, n_buf = _record(rng, u0, 0, lo, True, a, m, c, s, s2inv, max_steps, 1.0, buf, n_buf)
                    if tb == -2.0:
                        tb, k = _passage(rng, u0, lo, True, a, m, c, s, s2inv, 0, max_steps, 1.0, buf, 0)
                else:
                    tb, k = _passage(rng, u0, lo, True, a, m, c, s, s2inv, 0, max_steps, sign, buf, nb)
                if tb < 0:
                    continue
            t_buy[idx] = tb * dt
            if j == 0:
                ts, k2, n_buf = _record(rng, lo, k, hi, False, a, m, c, s, s2inv, max_steps, 1.0, buf, n_buf)
                if ts == -2.0:
                    ts, k2 = _passage(rng, lo, hi, False, a, m, c, s, s2inv, k, max_steps, 1.0, buf, 0)
            else:
                ts, k2 = _passage(rng, lo, hi, False, a, m, c, s, s2inv, k, max_steps, sign, buf, nb)
            if ts >= 0:
                t_sell[idx] = ts * dt
    return t_buy, t_sell


def _passage_times(model, r, x_tilde, x_star, x0, cfg: SimConfig):
    dt = cfg.dt or default_dt(model)
    horizon = cfg.horizon or default_horizon(r, cfg.truncation)
    sch = _Scheme.build(model, dt)
    lo, hi, u0 = to_sim(model, x_tilde), to_sim(model, x_star), to_sim(model, x0)
    if not lo < hi:
        raise ValueError("purchase threshold must lie below the exercise level")
    max_steps = int(math.ceil(horizon / dt))
    n_pairs = (cfg.n_paths + 1) // 2 if cfg.antithetic else cfg.n_paths
    sizes = [PAIRS_PER_BATCH] * (n_pairs // PAIRS_PER_BATCH)
    if n_pairs % PAIRS_PER_BATCH:
        sizes.append(n_pairs % PAIRS_PER_BATCH)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    buf_len = min(max_steps, REPLAY_STEPS)

    def run(i):
        rng = np.random.default_rng(children[i])
        return _cycle_kernel(rng, sizes[i], u0, lo, hi, sch.a, sch.m, sch.c, sch.s, dt,
                             max_steps, cfg.antithetic, np.empty(buf_len))

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    t_buy = np.concatenate([p[0] for p in parts])
    t_sell = np.concatenate([p[1] for p in parts])
    echo = {"dt": dt, "horizon": horizon, "n_paths": len(t_buy), "seed": cfg.seed,
            "antithetic": cfg.antithetic, "batches": len(sizes), "pairs_per_batch": PAIRS_PER_BATCH}
    return t_buy, t_sell, horizon, echo


def _pair_means(v: np.ndarray, antithetic: bool) -> np.ndarray:
    return 0.5 * (v[0::2] + v[1::2]) if antithetic else v


def _cashflows(c: ContractParams, x_tilde: float, x0: float, t_buy, t_sell):
    # a start at or below the threshold buys immediately at the start price
    buy_price = min(x0, x_tilde)
    disc_buy = np.where(t_buy >= 0, np.exp(-c.r * t_buy), 0.0)
    disc_sell = np.where(t_sell >= 0, np.exp(-c.r * t_sell), 0.0)
    purchase = disc_buy * (-buy_price + c.p_c)
    return purchase, disc_sell


def estimate_single_value(model: DiffusionModel, c: ContractParams, x_tilde: float, x0: float,
                          cfg: SimConfig = SimConfig()) -> PolicyEstimate:
    """Value of buying at the first passage to ``x_tilde`` and receiving ``K_c`` at the next passage to ``x_star``."""
    if not x_tilde < c.x_star:
        raise ValueError("purchase threshold must lie below the exercise level")
    if x0 < x_tilde:
        raise ValueError("start price must not lie below the purchase threshold")
    t_buy, t_sell, horizon, echo = _passage_times(model, c.r, x_tilde, c.x_star, x0, cfg)
    purchase, disc_sell = _cashflows(c, x_tilde, x0, t_buy, t_sell)
    values = purchase + c.K_c * disc_sell
    pm = _pair_means(values, cfg.antithetic)
    bound = math.exp(-c.r * horizon) * (abs(-x_tilde + c.p_c) + c.K_c)
    return PolicyEstimate(float(pm.mean()), float(pm.std(ddof=1) / math.sqrt(len(pm))), len(values),
                          bound, int(np.sum(t_sell < 0)), echo)


def estimate_lifetime_value(model: DiffusionModel, c: ContractParams, x_check: float, x0: float,
                            cfg: SimConfig = SimConfig()) -> PolicyEstimate:
    """Value of repeating the buy-at-``x_check``/sell-at-``x_star`` cycle with capacity ``A^n``.

    Cycles starting at ``x_star`` are independent and identically
    distributed, so with ``P`` the discounted purchase cash and ``L`` the
    discount factor at the sale, the value at ``x_star`` solves
    ``y = E[P] + (K_c + A y) E[L]``. The standard error follows from the
    delta method. For ``x0 != x_star`` one extra leg from ``x0`` is added.
    """
    if not x_check < c.x_star:
        raise ValueError("purchase threshold must lie below the exercise level")
    if cfg.horizon is None:
        # each cycle's truncation error is amplified by 1/(1 - A E[L]) <= 1/(1 - A)
        cfg = replace(cfg, horizon=default_horizon(c.r, cfg.truncation * (1.0 - c.A)))
    t_buy, t_sell, horizon, echo = _passage_times(model, c.r, x_check, c.x_star, c.x_star, cfg)
    purchase, disc = _cashflows(c, x_check, c.x_star, t_buy, t_sell)
    P = _pair_means(purchase, cfg.antithetic)
    L = _pair_means(disc, cfg.antithetic)
    Lbar = L.mean()
    denom = 1.0 - c.A * Lbar
    y = (P.mean() + c.K_c * Lbar) / denom
    infl = (P + (c.K_c + c.A * y) * L) / denom
    se = infl.std(ddof=1) / math.sqrt(len(infl))
    # a cycle cut at the horizon can forfeit at most the whole remaining value
    bound = math.exp(-c.r * horizon) * (abs(-x_check + c.p_c) + c.K_c + c.A * abs(y)) / denom
    n_unfinished = int(np.sum(t_sell < 0))
    if x0 != c.x_star:
        if x0 < x_check:
            raise ValueError("start price must not lie below the purchase threshold")
        cfg0 = replace(cfg, seed=cfg.seed + 1)
        tb, ts, _, _ = _passage_times(model, c.r, x_check, c.x_star, x0, cfg0)
        p0, l0 = _cashflows(c, x_check, x0, tb, ts)
        first = _pair_means(p0 + (c.K_c + c.A * y) * l0, cfg.antithetic)
        l0m = _pair_means(l0, cfg.antithetic)
        y0 = first.mean()
        se = math.sqrt(first.var(ddof=1) / len(first) + (c.A * l0m.mean() * se) ** 2)
        y = y0
        n_unfinished += int(np.sum(ts < 0))
    return PolicyEstimate(float(y), float(se), len(purchase), bound, n_unfinished, echo)
