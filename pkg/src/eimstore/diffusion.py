"""Price-process models and their increasing/decreasing r-harmonic functions.

Every model works in a *state* coordinate. For the OU, negative-GBM and
Brownian models the state is the price itself; for the shifted-exponential
stack the state is the imbalance ``z`` and the price is ``D + d*exp(b*z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

# Gauss-Legendre nodes for one panel of the OU integral.
DEFAULT_NODES = 24
# Gaussian tail cut: exp(-TAIL**2/2) is far below double precision.
_TAIL = 14.0


class ModelError(ValueError):
    """Invalid model parameters or arguments outside the state space."""


@dataclass(frozen=True)
class OU:
    """Ornstein-Uhlenbeck process ``dX = theta*(mu - X) dt + sigma dW``."""

    theta: float
    mu: float
    sigma: float
    kind = "ou"

    def __post_init__(self):
        if not (self.theta > 0 and self.sigma > 0):
            raise ModelError(f"OU needs theta > 0 and sigma > 0, got theta={self.theta}, sigma={self.sigma}")

    lower = -math.inf
    upper = math.inf

    @property
    def centre(self) -> float:
        return self.mu

    @property
    def length_scale(self) -> float:
        return self.sigma / math.sqrt(2.0 * self.theta)

    def drift(self, x):
        return self.theta * (self.mu - np.asarray(x, dtype=float))

    def volatility(self, x):
        return self.sigma * np.ones_like(np.asarray(x, dtype=float))

    def price(self, x):
        return x

    def state(self, price):
        return price

    @property
    def price_lower(self) -> float:
        return -math.inf


@dataclass(frozen=True)
class BrownianMotion:
    """Standard Brownian motion, used as an imbalance process."""

    kind = "bm"
    lower = -math.inf
    upper = math.inf
    centre = 0.0
    length_scale = 1.0

    def drift(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def volatility(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def price(self, x):
        return x

    def state(self, price):
        return price

    @property
    def price_lower(self) -> float:
        return -math.inf


@dataclass(frozen=True)
class NegGBM:
    """Negative geometric Brownian motion ``X = -exp((mu - sigma^2/2) t + sigma W)``."""

    mu: float
    sigma: float
    kind = "neg_gbm"
    lower = -math.inf
    upper = 0.0
    centre = -1.0
    length_scale = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"NegGBM needs sigma > 0, got {self.sigma}")

    def drift(self, x):
        return self.mu * np.asarray(x, dtype=float)

    def volatility(self, x):
        return self.sigma * np.abs(np.asarray(x, dtype=float))

    def price(self, x):
        return x

    def state(self, price):
        return price

    @property
    def price_lower(self) -> float:
        return -math.inf

    def gammas(self, r: float) -> tuple[float, float]:
        """Roots ``gamma1 < 0 < gamma2`` of ``s^2/2 g^2 + (mu - s^2/2) g - r = 0``."""
        s2 = self.sigma ** 2
        if math.isclose(self.mu, r, rel_tol=1e-12, abs_tol=0.0):
            return -2.0 * r / s2, 1.0
        B = 0.5 - self.mu / s2
        root = math.sqrt(B * B + 2.0 * r / s2)
        g2 = B + root
        # product of the roots is -2r/sigma^2; avoids cancellation in B - root
        return -2.0 * r / s2 / g2, g2


Inner = Union[OU, BrownianMotion]


@dataclass(frozen=True)
class ShiftedExpStack:
    """Price stack ``X = D + d*exp(b*Z)`` over an imbalance diffusion ``Z``.

    An OU imbalance with mean ``m`` and volatility ``s`` is rewritten as a
    zero-mean unit-volatility OU by absorbing ``m`` into ``d`` and ``s``
    into ``b``. The state ``z`` then
    refers to the normalised imbalance.
    """

    D: float
    d: float
    b: float
    inner: Inner
    kind = "stack"

    def __post_init__(self):
        if not (self.d > 0 and self.b > 0):
            raise ModelError(f"stack needs d > 0 and b > 0, got d={self.d}, b={self.b}")
        if not isinstance(self.inner, (OU, BrownianMotion)):
            raise ModelError("stack inner process must be OU or BrownianMotion")
        if isinstance(self.inner, OU) and (self.inner.mu != 0.0 or self.inner.sigma != 1.0):
            m, s = self.inner.mu, self.inner.sigma
            object.__setattr__(self, "d", self.d * math.exp(self.b * m))
            object.__setattr__(self, "b", self.b * s)
            # Z = m + s Z' with dZ' = -theta Z' dt + dW
            object.__setattr__(self, "inner", OU(self.inner.theta, 0.0, 1.0))

    @property
    def lower(self) -> float:
        return self.inner.lower

    @property
    def upper(self) -> float:
        return self.inner.upper

    @property
    def centre(self) -> float:
        return self.inner.centre

    @property
    def length_scale(self) -> float:
        return self.inner.length_scale

    def drift(self, z):
        return self.inner.drift(z)

    def volatility(self, z):
        return self.inner.volatility(z)

    def price(self, z):
        return self.D + self.d * np.exp(self.b * np.asarray(z, dtype=float))

    def state(self, price):
        p = np.asarray(price, dtype=float)
        if np.any(p <= self.D):
            raise ModelError(f"price {price} is not above the stack floor D={self.D}")
        out = np.log((p - self.D) / self.d) / self.b
        return float(out) if out.ndim == 0 else out

    @property
    def price_lower(self) -> float:
        return self.D


DiffusionModel = Union[OU, NegGBM, BrownianMotion, ShiftedExpStack]


# --- parabolic cylinder integral ------------------------------------------------

@lru_cache(maxsize=8)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _log_head(s: float, k: float, h: float) -> float:
    """log of int_0^h t^(k-1) exp(s t - t^2/2) dt via the Taylor series of the exponential.

    Requires |s| h <= 2 and h <= 1 so the series converges without cancellation.
    """
    a_prev, a = 0.0, 1.0
    total = 1.0 / k
    n = 0
    while True:
        a_next = (s * h * a - h * h * a_prev) / (n + 1)
        a_prev, a = a, a_next
        n += 1
        term = a / (n + k)
        total += term
        if (max(abs(a), abs(a_prev)) < 1e-18 * abs(total)) or n > 400:
            break
    return k * math.log(h) + math.log(total)


def log_pcf_integral(s: float, k: float, nodes: int = DEFAULT_NODES) -> float:
    """``log int_0^inf t^(k-1) exp(s t - t^2/2) dt`` for ``k > 0``.

    The singular weight near zero is integrated analytically on a short head
    panel; the remainder uses Gauss-Legendre panels, geometric near the
    origin and unit width around the Gaussian peak. Everything is combined in
    log space so very large ``|s|`` neither overflows nor underflows.
    """
    s = float(s)
    km1 = max(k - 1.0, 0.0)
    # location and width of the integrand's peak (log-concave for k >= 1)
    t_pk = 0.5 * (s + math.sqrt(s * s + 4.0 * km1))
    sd = 1.0 / math.sqrt(1.0 + km1 / t_pk ** 2) if t_pk > 0 else 1.0
    end = t_pk + _TAIL * sd
    if s < -2.0:
        end = min(end + 60.0 / -s, t_pk + _TAIL)
    h = 1.0 if abs(s) <= 2.0 else 2.0 / abs(s)
    width = 2.0 / -s if s < -2.0 else 1.0
    logs = [_log_head(s, k, h)]
    edges = [h]
    if s > 2.0:
        e = h
        while e < min(1.0, end):
            e = min(2.0 * e, 1.0, end)
            edges.append(e)
    first = edges[-1]
    lo_peak = t_pk - _TAIL * sd
    # mass on [first, lo_peak] is below exp(-TAIL^2/2) relative to the peak
    edges_u = [max(first, lo_peak)]
    if end > edges_u[0]:
        m = int(math.ceil((end - edges_u[0]) / width))
        edges_u = list(np.linspace(edges_u[0], end, m + 1))
    x, w = _legendre(nodes)
    panels = list(zip(edges[:-1], edges[1:])) + list(zip(edges_u[:-1], edges_u[1:]))
    if panels:
        lo = np.array([p[0] for p in panels])[:, None]
        hi = np.array([p[1] for p in panels])[:, None]
        t = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
        logf = (k - 1.0) * np.log(t) + s * t - 0.5 * t * t + np.log(0.5 * (hi - lo) * w[None, :])
        logs.append(_logsumexp(logf.ravel()))
    return _logsumexp(np.array(logs))


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if not np.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(v - m))))


def pcf_D(nu: float, z: float, nodes: int = DEFAULT_NODES) -> float:
    """Parabolic cylinder function ``D_nu(z)`` for ``nu < 0`` from its integral representation."""
    if nu >= 0:
        raise ModelError("integral representation needs nu < 0")
    return math.exp(-z * z / 4.0 - math.lgamma(-nu) + log_pcf_integral(-z, -nu, nodes))


# --- eigen pairs -------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    """Fundamental solutions of ``(L - r) v = 0`` normalised to 1 at ``c``."""

    model: DiffusionModel
    r: float
    c: float
    _log_psi: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    _log_phi: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    # optional direct evaluators for closed forms (exact powers)
    _psi: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False, compare=False)
    _phi: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False, compare=False)

    def log_psi(self, x):
        return _apply(self._log_psi, x)

    def log_phi(self, x):
        return _apply(self._log_phi, x)

    def psi(self, x):
        if self._psi is not None:
            return _apply(self._psi, x)
        return np.exp(self.log_psi(x))

    def phi(self, x):
        if self._phi is not None:
            return _apply(self._phi, x)
        return np.exp(self.log_phi(x))

    def F(self, x):
        """Increasing ratio ``psi/phi``."""
        return np.exp(self.log_psi(x) - self.log_phi(x))

    def in_interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x > self.model.lower) & (x < self.model.upper)))


def _apply(fn, x):
    arr = np.asarray(x, dtype=float)
    out = fn(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def make_eigenpair(model: DiffusionModel, r: float, nodes: int = DEFAULT_NODES) -> EigenPair:
    """Build the increasing (psi) and decreasing (phi) r-harmonic functions of ``model``."""
    if not (r > 0 and math.isfinite(r)):
        raise ModelError(f"discount rate must be positive, got {r}")
    base = model.inner if isinstance(model, ShiftedExpStack) else model

    if isinstance(base, OU):
        k = r / base.theta
        scale = math.sqrt(2.0 * base.theta) / base.sigma
        mu = base.mu
        log0 = log_pcf_integral(0.0, k, nodes)

        def lpsi(x):
            return np.array([log_pcf_integral((v - mu) * scale, k, nodes) for v in x]) - log0

        def lphi(x):
            return np.array([log_pcf_integral(-(v - mu) * scale, k, nodes) for v in x]) - log0

        c = mu
    elif isinstance(base, BrownianMotion):
        rate = math.sqrt(2.0 * r)

        def lpsi(x):
            return rate * x

        def lphi(x):
            return -rate * x

        c = 0.0
    elif isinstance(base, NegGBM):
        g1, g2 = base.gammas(r)

        def lpsi(x):
            _check_negative(x)
            return g1 * np.log(-x)

        def lphi(x):
            _check_negative(x)
            return g2 * np.log(-x)

        def psi(x):
            _check_negative(x)
            return (-x) ** g1

        def phi(x):
            _check_negative(x)
            return -x if g2 == 1.0 else (-x) ** g2

        return EigenPair(model, float(r), -1.0, lpsi, lphi, psi, phi)
    else:
        raise ModelError(f"unsupported model {model!r}")
    return EigenPair(model, float(r), c, lpsi, lphi)


def _check_negative(x):
    if np.any(x >= 0):
        raise ModelError("negative GBM state must be < 0")


def hitting_discount(pair: EigenPair, x, y):
    """Laplace transform ``E^x[exp(-r tau_y)]`` of the first passage time to ``y``."""
    if not (pair.in_interior(x) and pair.in_interior(y)):
        raise ModelError(f"points ({x}, {y}) are outside the state space")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    up = pair.log_psi(x) - pair.log_psi(y)
    down = pair.log_phi(x) - pair.log_phi(y)
    out = np.exp(np.where(x < y, up, down))
    return float(out) if out.ndim == 0 else out


# --- left-boundary limit L_c ------------------------------------------------------

@dataclass(frozen=True)
class LcClassification:
    """Limit of ``-price/phi`` at the left boundary: ``Zero``, ``Finite`` or ``Infinite``."""

    tag: str
    value: Optional[float] = None
    confidence: str = "analytic"

    def __post_init__(self):
        if self.tag == "Finite" and not (self.value is not None and self.value > 0):
            raise ValueError("a Finite L_c must carry a positive value")

    @property
    def numeric(self) -> float:
        return {"Zero": 0.0, "Infinite": math.inf}.get(self.tag, self.value)


def classify_Lc(pair: EigenPair, analytic: bool = True) -> LcClassification:
    """Classify ``limsup_{x->a} -price(x)/phi(x)``.

    Closed forms are used where available: zero for OU, Brownian and stack
    models (and whenever the price is bounded below), power-law behaviour for
    the negative GBM. Otherwise a numerical probe is run.
    """
    m = pair.model
    if analytic:
        if isinstance(m, (OU, BrownianMotion, ShiftedExpStack)) or math.isfinite(m.price_lower):
            return LcClassification("Zero")
        if isinstance(m, NegGBM):
            if math.isclose(m.mu, pair.r, rel_tol=1e-12, abs_tol=0.0):
                return LcClassification("Finite", 1.0)
            return LcClassification("Infinite" if m.mu > pair.r else "Zero")
    return probe_Lc(pair)


def probe_Lc(pair: EigenPair, steps: int = 40, slope_tol: float = 1e-6) -> LcClassification:
    """Numerical probe of ``-price/phi`` on ``x_k = x0 - 2^k * scale``.

    The tail of ``log q`` against ``log |x|`` is fitted by a line; a negative
    slope means ``Zero``, a positive one ``Infinite`` and a flat tail a
    finite limit.
    """
    m = pair.model
    x0 = min(m.centre, -abs(m.centre)) - m.length_scale
    xs = x0 - np.exp2(np.arange(steps)) * m.length_scale
    price = np.asarray(m.price(xs), dtype=float)
    with np.errstate(all="ignore"):
        logq = np.where(-price > 0, np.log(np.abs(price)) - pair.log_phi(xs), -np.inf)
    tail = slice(steps - 8, steps)
    if np.any(np.isneginf(logq[tail])):
        return LcClassification("Zero", confidence="high")
    if not np.all(np.isfinite(logq[tail])):
        return LcClassification("Infinite", confidence="high")
    slope = np.polyfit(np.log(-xs[tail]), logq[tail], 1)[0]
    if slope < -slope_tol:
        return LcClassification("Zero", confidence="high")
    if slope > slope_tol:
        return LcClassification("Infinite", confidence="high")
    return LcClassification("Finite", float(np.exp(logq[-1])), confidence="low")
