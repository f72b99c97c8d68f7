"""Diminishing step sizes alpha_t = alpha / (t + beta)^gamma and derived series.

Infinite series are summed over a finite horizon of max(10^6, 10 k) terms and
the rest is bracketed with the integral test: for a decreasing convex summand
h, ``int_m^inf h <= sum_{j>=m} h(j) <= int_{m-1/2}^inf h``.  Series helpers
return :class:`SeriesValue` with the upper estimate as ``value`` and the
bracket width as ``remainder``, so the true sum lies in
``[value - remainder, value]``.
"""
from dataclasses import dataclass
import math
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConditionError, InvalidParameterError

HORIZON = 10 ** 6
KAPPA = {"rr": 2.0, "ig": 2.0, "sppm": 6.0}


@dataclass(frozen=True)
class StepSchedule:
    alpha: float
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            raise InvalidParameterError(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")

    def steps(self, T, start=1):
        """alpha_t for t = start, ..., start + T - 1."""
        t = np.arange(start, start + T, dtype=float)
        return self.alpha / (t + self.beta) ** self.gamma

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


class SeriesValue(NamedTuple):
    value: float
    remainder: float

    @property
    def lower(self):
        return self.value - self.remainder


class ConditionReport(NamedTuple):
    weak_convergence: bool
    kl_window: bool
    tail_window: Optional[bool]


@dataclass(frozen=True)
class TailBracket:
    """Two-sided bound on sum_{t>=k} alpha_t (sum_{j>=t} alpha_j^3)^theta."""

    lower: float
    upper: float
    empirical: float
    empirical_remainder: float
    nu: float
    a_lower: float
    a_upper: float

    @property
    def contains(self):
        lo = self.empirical - self.empirical_remainder
        return self.lower <= lo and self.empirical <= self.upper


def step_size(schedule, t):
    if t < 1:
        raise InvalidParameterError(f"iteration index must be >= 1, got {t}")
    return schedule.alpha / (t + schedule.beta) ** schedule.gamma


def admissible_bound(L, N):
    """Largest step the per-epoch recursions allow: 1 / (sqrt(2) L N)."""
    return 1.0 / (math.sqrt(2.0) * L * N)


def first_valid_iteration(schedule, L, N):
    """Smallest t >= 1 with alpha_t <= 1 / (sqrt(2) L N)."""
    if L <= 0 or N <= 0:
        raise InvalidParameterError("L and N must be positive")
    bound = admissible_bound(L, N)
    guess = (math.sqrt(2.0) * L * N * schedule.alpha) ** (1.0 / schedule.gamma) - schedule.beta
    # the closed form can be off either way after rounding; bisect around it
    # on integers, since unit steps stall once t is past 2^53
    def ok(t):
        return step_size(schedule, t) <= bound

    hi = max(1, math.ceil(guess))
    width = 1
    while not ok(hi):
        hi += width
        width *= 2
    lo = hi
    width = 1
    while lo > 1 and ok(lo):
        lo = max(1, lo - width)
        width *= 2
    if ok(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def check_conditions(schedule, theta=None):
    g = schedule.gamma
    tail = None
    if theta is not None:
        tail = (1 + theta) / (1 + 3 * theta) < g <= 1.0
    return ConditionReport(
        weak_convergence=1.0 / 3.0 < g <= 1.0,
        kl_window=0.5 < g <= 1.0,
        tail_window=tail,
    )


def power_tail(s, shift, k, horizon=None):
    """sum_{j>=k} (j + shift)^(-s) for s > 1."""
    if s <= 1:
        raise ConditionError(f"series with exponent {s} <= 1 diverges")
    M = horizon if horizon is not None else max(HORIZON, 10 * k)
    j = np.arange(k, k + M, dtype=float) + shift
    partial = float(np.sum(j[::-1] ** (-s)))
    m = k + M + shift
    hi = (m - 0.5) ** (1 - s) / (s - 1)
    lo = m ** (1 - s) / (s - 1)
    return SeriesValue(partial + hi, hi - lo)


def cube_tail(schedule, k, horizon=None):
    """sum_{j>=k} alpha_j^3."""
    res = power_tail(3 * schedule.gamma, schedule.beta, k, horizon)
    a3 = schedule.alpha ** 3
    return SeriesValue(a3 * res.value, a3 * res.remainder)


def series_constant(schedule, L, N, kappa=2.0, start=1):
    """kappa L^3 N^3 sum_{j>=start} alpha_j^3, the exponent inside G."""
    if schedule.gamma <= 1.0 / 3.0:
        raise ConditionError("sum of alpha_t^3 diverges for gamma <= 1/3")
    tail = cube_tail(schedule, start)
    c = kappa * (L * N) ** 3
    return SeriesValue(c * tail.value, c * tail.remainder)


def g_constant(schedule, f0_gap, variant, L, N, start=1):
    """G = gap * exp(kappa L^3 N^3 sum_{j>=start} alpha_j^3), kappa by variant.

    ``f0_gap`` is f(x^{start-1}) - f_min_bar; ``start`` > 1 restarts the bound
    at the first epoch whose step is admissible.  The upper series estimate is
    used, so the returned G is a valid bound.
    """
    if f0_gap < 0:
        raise InvalidParameterError("f0_gap must be nonnegative")
    kappa = KAPPA[variant.lower()]
    if f0_gap == 0:
        return 0.0
    return f0_gap * math.exp(series_constant(schedule, L, N, kappa, start).value)


def u_sequence(schedule, G, L, N, t, kappa=2.0):
    """u_t = kappa G L^3 N^3 sum_{j>=t+1} alpha_j^3."""
    if schedule.gamma <= 1.0 / 3.0:
        raise ConditionError("u_t is infinite for gamma <= 1/3")
    if G == 0:
        return 0.0
    return kappa * G * (L * N) ** 3 * cube_tail(schedule, t + 1).value


def u_stream(schedule, G, L, N, T, kappa=2.0):
    """u_0, ..., u_T in one pass; returns (array, remainder bound)."""
    if G == 0:
        return np.zeros(T + 1), 0.0
    c = kappa * G * (L * N) ** 3
    tail = cube_tail(schedule, T + 1)
    a3 = schedule.steps(T) ** 3
    # u_t = c * (sum_{j=t+1}^T alpha_j^3 + tail)
    suffix = np.concatenate([np.cumsum(a3[::-1])[::-1], [0.0]])
    return c * (suffix + tail.value), c * tail.remainder


def tail_series_bracket(schedule, theta, k, horizon=None):
    alpha, beta, gamma = schedule.alpha, schedule.beta, schedule.gamma
    if not 0 < theta <= 1:
        raise ConditionError(f"theta must lie in (0, 1], got {theta}")
    if not (1 + theta) / (1 + 3 * theta) < gamma <= 1:
        raise ConditionError(
            f"gamma={gamma} outside ((1+theta)/(1+3theta), 1] for theta={theta}")
    nu = (1 + 3 * theta) * gamma - (1 + theta)
    a_theta = alpha ** (3 * theta) / (3 * gamma - 1) ** theta
    a_lower = a_theta * alpha / nu
    e = 1 + 3 * theta
    a_upper = (a_theta * alpha / (1 + beta) + a_theta * alpha / nu
               + alpha ** e / (1 + beta) ** (1 + theta)
               + alpha ** e / ((gamma + 3 * theta * gamma - 1) * (1 + beta) ** theta))
    scale = (k + beta) ** (-nu)

    M = horizon if horizon is not None else max(HORIZON, 10 * k)
    t = np.arange(k, k + M, dtype=float)
    steps = alpha / (t + beta) ** gamma
    inner_tail = cube_tail(schedule, k + M, horizon=M)
    suffix = np.cumsum((steps ** 3)[::-1])[::-1]
    hi = float(np.sum((steps * (suffix + inner_tail.value) ** theta)[::-1]))
    lo = float(np.sum((steps * (suffix + inner_tail.lower) ** theta)[::-1]))
    # outer terms t >= m, bracketed with the same estimates as the closed form
    m = k + M + beta
    lo += a_theta * alpha * m ** (-nu) / nu
    hi += (alpha ** e * (m ** (-e * gamma) + m ** (1 - e * gamma) / (e * gamma - 1))
           + a_theta * alpha * (m ** (-(nu + 1)) + m ** (-nu) / nu))
    return TailBracket(
        lower=a_lower * scale, upper=a_upper * scale, empirical=hi,
        empirical_remainder=hi - lo, nu=nu, a_lower=a_lower, a_upper=a_upper,
    )
