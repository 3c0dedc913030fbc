"""One-dimensional maximisation: grid scan followed by golden-section refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizationError(RuntimeError):
    """Raised when a bracketed maximisation cannot produce a finite result."""


def golden_section_max(f: Callable[[float], float], lo: float, hi: float,
                       tol: float, max_iter: int = 300) -> tuple[float, float]:
    """Maximise a unimodal scalar function on ``[lo, hi]``.

    Returns ``(x, f(x))`` for the best point evaluated; the end points are
    included in the comparison so a monotone function returns its boundary.
    """
    if hi < lo:
        lo, hi = hi, lo
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            if fd > best_f:
                best_x, best_f = d, fd
    for x in (lo, hi):
        fx = f(x)
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f


@dataclass(frozen=True)
class Maximum:
    x: float
    value: float
    grid_x: np.ndarray
    grid_f: np.ndarray
    bracket: tuple[float, float]
    at_left_edge: bool


def left_grid(right: float, lower: float, scale: float, span: float, n: int) -> np.ndarray:
    """Increasing grid on ``(lower, right)``, log-spaced toward both ends.

    For ``lower = -inf`` the grid is ``right - exp(u)``, reaching ``span``
    below ``right``; for finite ``lower`` a logistic map clusters points at
    both end points.
    """
    if math.isinf(lower):
        u = np.linspace(math.log(span), math.log(1e-9 * scale), n)
        return right - np.exp(u)
    u = np.linspace(-30.0, 30.0, n)
    return lower + (right - lower) / (1.0 + np.exp(-u))


def maximize_left_of(f: Callable[[np.ndarray], np.ndarray], right: float, lower: float,
                     scale: float, *, n_grid: int = 512, rtol: float = 1e-8,
                     prefer: str = "right", tie_rtol: float = 1e-12,
                     max_expansions: int = 40) -> Maximum:
    """Maximise a vectorised function over the open interval ``(lower, right)``.

    The grid stage guards against multimodality; the best grid point (the
    rightmost one within ``tie_rtol`` of the maximum when ``prefer='right'``)
    is refined by golden section between its neighbours. With an unbounded
    left end the search span is widened while the grid maximum sits at the
    leftmost points.
    """
    span = 64.0 * scale
    expansions = 0
    while True:
        xs = left_grid(right, lower, scale, span, n_grid)
        with np.errstate(all="ignore"):
            fs = np.asarray(f(xs), dtype=float)
        fs = np.where(np.isnan(fs), -np.inf, fs)
        fmax = float(np.max(fs))
        if fmax == -np.inf and math.isinf(lower) and expansions < max_expansions:
            span *= 8.0
            expansions += 1
            continue
        if not np.isfinite(fmax) and fmax < 0:
            raise OptimizationError("objective is -inf or NaN on the whole search grid")
        if fmax == np.inf:
            i = int(np.argmax(fs))
            return Maximum(float(xs[i]), math.inf, xs, fs, (float(xs[i]), float(xs[i])), i <= 2)
        close = np.nonzero(fs >= fmax - tie_rtol * max(abs(fmax), 1e-300))[0]
        i = int(close[-1] if prefer == "right" else close[0])
        if math.isinf(lower) and i <= 2 and expansions < max_expansions:
            span *= 8.0
            expansions += 1
            continue
        break

    lo = float(xs[max(i - 1, 0)])
    hi = float(xs[min(i + 1, n_grid - 1)])

    def scalar(x: float) -> float:
        v = float(np.asarray(f(np.array([x])))[0])
        return -math.inf if math.isnan(v) else v

    tol = rtol * max(scale, 1e-300)
    x_best, f_best = golden_section_max(scalar, lo, hi, tol)
    if fs[i] > f_best:
        x_best, f_best = float(xs[i]), float(fs[i])
    return Maximum(x_best, f_best, xs, fs, (lo, hi), i <= 2)
