"""Finite-sum test problems with known minimizers and KL exponents.

Three families are built in:

``quadratic``
    f(x, i) = 1/2 (x - a_i)^T D (x - a_i); strongly convex, exponent 1/2.
``power``
    f(x, i) = h_p(||x||) + b_i^T x with h_p(r) = r^(2p) / (2p) inside radius R
    and a C^1 quadratic continuation outside.  The offsets b_i sum to zero,
    so the average is h_p with a flat minimum at 0 and exponent 1 - 1/(2p).
``double_well``
    f(x, i) = sum_j w(x_j) + b_i^T x with w(s) = (s^2 - 1)^2 / 4 for |s| <= R,
    continued quadratically beyond R.  The average has 3^n stationary points,
    minimizers at (+-1, ..., +-1) with exponent 1/2.

Component callables broadcast over leading axes, so ``component_value(X, i)``
with ``X`` of shape (m, n) returns m values.
"""
from dataclasses import dataclass, field
import inspect
import itertools
import math
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError

KL_HEADROOM = 1.1
DOUBLE_WELL_ETA = 1.0 / 16.0


@dataclass(frozen=True)
class KLDescriptor:
    """Lojasiewicz data |f(x) - f_star|^theta <= c (1 - theta) ||grad f(x)||.

    Valid where 0 < |f(x) - f_star| < eta near the associated stationary point.
    """

    theta: float
    c: float
    eta: float
    f_star: float

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise InvalidParameterError(f"theta must lie in [0, 1), got {self.theta}")
        if self.c <= 0 or self.eta <= 0:
            raise InvalidParameterError("c and eta must be positive")


@dataclass(frozen=True, eq=False)
class FiniteSumProblem:
    """f(x) = (1/N) sum_i f(x, i) together with its analytic metadata.

    Component indices are 0-based.  ``lipschitz`` is a gradient-Lipschitz
    constant of every component on the whole space (the built-in families are
    blended outside ``working_radius`` precisely so that this holds).
    """

    n: int
    N: int
    component_value: Callable
    component_gradient: Callable
    lipschitz: float
    working_radius: float
    component_lower_bounds: np.ndarray
    component_prox: Optional[Callable] = None
    minimizer: Optional[np.ndarray] = None
    kl: Optional[KLDescriptor] = None
    stationary_points: Optional[np.ndarray] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    kernel: Optional[tuple] = None

    @property
    def f_min_bar(self):
        return float(np.min(self.component_lower_bounds))


def full_value(problem, x):
    x = np.asarray(x, dtype=float)
    return sum(problem.component_value(x, i) for i in range(problem.N)) / problem.N


def full_gradient(problem, x):
    x = np.asarray(x, dtype=float)
    return sum(problem.component_gradient(x, i) for i in range(problem.N)) / problem.N


def descent_lemma_check(problem, sample_pairs):
    """Largest f(y,i) - f(x,i) - <grad f(x,i), y-x> - L/2 ||y-x||^2 over pairs.

    A nonpositive result (up to rounding) is consistent with the declared L.
    """
    worst = -np.inf
    L = problem.lipschitz
    for x, y in sample_pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = y - x
        for i in range(problem.N):
            gap = (problem.component_value(y, i) - problem.component_value(x, i)
                   - problem.component_gradient(x, i) @ d - 0.5 * L * (d @ d))
            worst = max(worst, float(gap))
    return worst


def sample_ball(rng, n, radius, count):
    """Uniform samples from the Euclidean ball of the given radius."""
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return v * r[:, None]


# ---------------------------------------------------------------- quadratic

def make_quadratic(n, N, anchors, eigenvalues):
    anchors = np.array(anchors, dtype=float).reshape(N, n)
    d = np.array(eigenvalues, dtype=float).reshape(n)
    if N < 1 or n < 1:
        raise InvalidParameterError("n and N must be positive")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise InvalidParameterError("eigenvalues must be strictly positive")
    anchors.setflags(write=False)
    d.setflags(write=False)

    def value(x, i):
        r = x - anchors[i]
        return 0.5 * np.sum(d * r * r, axis=-1)

    def gradient(x, i):
        return d * (x - anchors[i])

    def prox(x, i, alpha):
        return (x + alpha * d * anchors[i]) / (1.0 + alpha * d)

    x_star = anchors.mean(axis=0)
    mu = float(d.min())
    f_star = float(np.mean([value(x_star, i) for i in range(N)]))
    kl = KLDescriptor(theta=0.5, c=math.sqrt(2.0 / mu), eta=math.inf, f_star=f_star)
    radius = float(np.max(np.linalg.norm(anchors, axis=1))) + 1.0
    return FiniteSumProblem(
        n=n, N=N, component_value=value, component_gradient=gradient,
        component_prox=prox, lipschitz=float(d.max()), working_radius=radius,
        component_lower_bounds=np.zeros(N), minimizer=x_star, kl=kl,
        stationary_points=x_star[None, :], name="quadratic",
        params={"anchors": anchors, "eigenvalues": d},
        kernel=(0, anchors, d, 0, 0.0),
    )


# -------------------------------------------------------------------- power

def _check_offsets(offsets, N, n):
    offsets = np.array(offsets, dtype=float).reshape(N, n)
    scale = max(1.0, float(np.abs(offsets).max(initial=0.0)))
    if np.any(np.abs(offsets.sum(axis=0)) > 1e-10 * N * scale):
        raise InvalidParameterError("offset columns must sum to zero")
    offsets.setflags(write=False)
    return offsets


def _power_radial_min(b, p, R):
    """min over r >= 0 of g(r) - b r, g the blended radial profile."""
    if b == 0.0:
        return 0.0
    r = b ** (1.0 / (2 * p - 1))
    if r <= R:
        return r ** (2 * p) / (2 * p) - b * r
    a = R ** (2 * p - 2)
    r = b / a
    return a * r * r / 2 + R ** (2 * p) * (1.0 / (2 * p) - 0.5) - b * r


def _scan_kl_constant(ratio, grid, theta):
    """Certified c: max of |f - f*|^theta / ||grad f|| on a grid, with headroom."""
    worst = float(np.max(ratio(grid)))
    return KL_HEADROOM * worst / (1.0 - theta)


def make_power(n, N, p, offsets, R):
    if int(p) != p or p < 2:
        raise InvalidParameterError("p must be an integer >= 2")
    if R <= 0:
        raise InvalidParameterError("R must be positive")
    p = int(p)
    R = float(R)
    offsets = _check_offsets(offsets, N, n)
    q = 2 * p
    tail_shift = R ** q * (1.0 / q - 0.5)
    a_out = R ** (q - 2)

    def radial(r):
        return np.where(r <= R, r ** q / q, a_out * r * r / 2 + tail_shift)

    def value(x, i):
        r = np.linalg.norm(x, axis=-1)
        return radial(r) + x @ offsets[i]

    def gradient(x, i):
        r = np.linalg.norm(x, axis=-1)
        scale = np.minimum(r, R) ** (q - 2)
        return np.asarray(scale)[..., None] * x + offsets[i]

    theta = 1.0 - 1.0 / q
    grid = np.linspace(R * 1e-3, R, 20001)
    c = _scan_kl_constant(lambda r: (r ** q / q) ** theta / r ** (q - 1), grid, theta)
    kl = KLDescriptor(theta=theta, c=c, eta=R ** q / q, f_star=0.0)
    lower = np.array([_power_radial_min(float(np.linalg.norm(b)), p, R) for b in offsets])
    zero = np.zeros(n)
    return FiniteSumProblem(
        n=n, N=N, component_value=value, component_gradient=gradient,
        lipschitz=(q - 1) * R ** (q - 2), working_radius=R,
        component_lower_bounds=lower, minimizer=zero, kl=kl,
        stationary_points=zero[None, :], name="power",
        params={"p": p, "offsets": offsets, "R": R},
        kernel=(1, offsets, np.ones(n), p, R),
    )


# -------------------------------------------------------------- double well

def _well(s, R):
    a = np.abs(s)
    e = a - R
    inside = 0.25 * (s * s - 1.0) ** 2
    outside = 0.25 * (R * R - 1.0) ** 2 + (R * R - 1.0) * R * e + 0.5 * (3 * R * R - 1.0) * e * e
    return np.where(a <= R, inside, outside)


def _well_slope(s, R):
    a = np.abs(s)
    outside = np.sign(s) * ((R * R - 1.0) * R + (3 * R * R - 1.0) * (a - R))
    return np.where(a <= R, (s * s - 1.0) * s, outside)


def _well_tilted_min(b, R):
    """Exact min over s of w(s) + b s (critical points of a piecewise cubic)."""
    cands = [R, -R]
    for root in np.roots([1.0, 0.0, -1.0, b]):
        if abs(root.imag) < 1e-12 and abs(root.real) <= R:
            cands.append(root.real)
    sR = (R * R - 1.0) * R
    M = 3 * R * R - 1.0
    right = R - (sR + b) / M
    if right > R:
        cands.append(right)
    left = -R - (sR - b) / M
    if left < -R:
        cands.append(left)
    s = np.array(cands)
    return float(np.min(_well(s, R) + b * s))


def make_double_well(n, N, offsets, R):
    if R <= 1.0:
        raise InvalidParameterError("R must exceed 1 so the wells are not blended away")
    R = float(R)
    offsets = _check_offsets(offsets, N, n)

    def value(x, i):
        return np.sum(_well(x, R), axis=-1) + x @ offsets[i]

    def gradient(x, i):
        return _well_slope(x, R) + offsets[i]

    # Coordinatewise w(s) <= K w'(s)^2 on {w < eta} gives f <= K ||grad f||^2.
    eta = DOUBLE_WELL_ETA
    s_lo = math.sqrt(1.0 - 2.0 * math.sqrt(eta))
    grid = np.concatenate([np.linspace(s_lo, 1.0 - 1e-9, 20001),
                           np.linspace(1.0 + 1e-9, 1.0 + 2.0 * math.sqrt(eta) + R, 20001)])
    grid = grid[_well(grid, R) < eta]
    c = _scan_kl_constant(lambda s: np.sqrt(_well(s, R)) / np.abs(_well_slope(s, R)),
                          grid, 0.5)
    kl = KLDescriptor(theta=0.5, c=c, eta=eta, f_star=0.0)
    lower = np.array([sum(_well_tilted_min(bj, R) for bj in b) for b in offsets])
    stationary = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    return FiniteSumProblem(
        n=n, N=N, component_value=value, component_gradient=gradient,
        lipschitz=max(3 * R * R - 1.0, 1.0), working_radius=R,
        component_lower_bounds=lower, minimizer=np.ones(n), kl=kl,
        stationary_points=stationary, name="double_well",
        params={"offsets": offsets, "R": R},
        kernel=(2, offsets, np.ones(n), 0, R),
    )


# ----------------------------------------------------------------- registry

def _centered_offsets(rng, N, n, scale):
    b = scale * rng.standard_normal((N, n))
    return b - b.mean(axis=0)


def _build_quadratic(n=10, N=8, eig_min=0.5, eig_max=2.0, scale=1.0, seed=0):
    rng = np.random.default_rng(seed)
    anchors = scale * rng.standard_normal((N, n))
    return make_quadratic(n, N, anchors, np.linspace(eig_min, eig_max, n))


def _build_power(n=2, N=4, p=2, R=1.5, scale=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return make_power(n, N, p, _centered_offsets(rng, N, n, scale), R)


def _build_double_well(n=2, N=4, R=2.0, scale=0.3, seed=0):
    rng = np.random.default_rng(seed)
    return make_double_well(n, N, _centered_offsets(rng, N, n, scale), R)


BUILTIN = {
    "quadratic": (_build_quadratic, "strongly convex quadratic sum, KL exponent 1/2"),
    "power": (_build_power, "||x||^(2p)/(2p) plus cancelling linear terms, exponent 1-1/(2p)"),
    "double_well": (_build_double_well, "separable quartic double well, 3^n stationary points"),
}


def make_problem(name, **params):
    """Build a registered problem from generator parameters.

    The random anchors/offsets are drawn from ``numpy.random.default_rng(seed)``.
    """
    try:
        builder = BUILTIN[name][0]
    except KeyError:
        raise InvalidParameterError(f"unknown problem {name!r}; known: {sorted(BUILTIN)}") from None
    return builder(**params)


def problem_defaults(name):
    sig = inspect.signature(BUILTIN[name][0])
    return {k: v.default for k, v in sig.parameters.items()}
