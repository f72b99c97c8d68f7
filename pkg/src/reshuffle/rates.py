"""Theoretical rate exponents and empirical log-log slope fits.

For a Lojasiewicz exponent theta and step decay gamma in (1/2, 1] the distance
to the limit point decays like t^(-psi) with

    psi = 2 gamma - 1                                if theta < gamma / (3 gamma - 1)
    psi = (1 - theta)(1 - gamma) / (2 theta - 1)     otherwise

except at (theta, gamma) = (1/2, 1), where psi = 1 provided alpha > 2 c^2 / N.
"""
from dataclasses import dataclass
import math
from typing import NamedTuple, Optional

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError
from .problems import full_value

MIN_LENGTH = 100
MIN_POINTS = 10
EPS_FLOOR = 100 * np.finfo(float).eps


def _check_window(theta, gamma):
    if not 0.0 <= theta < 1.0:
        raise InvalidParameterError(f"theta must lie in [0, 1), got {theta}")
    if not 0.5 < gamma <= 1.0:
        raise InvalidParameterError(f"gamma must lie in (1/2, 1], got {gamma}")


def psi_boundary(gamma):
    """theta = gamma / (3 gamma - 1), where the two branches meet."""
    return gamma / (3.0 * gamma - 1.0)


def psi_rate(theta, gamma):
    _check_window(theta, gamma)
    if theta == 0.5 and gamma == 1.0:
        return 1.0
    if theta < psi_boundary(gamma):
        return 2.0 * gamma - 1.0
    return (1.0 - theta) * (1.0 - gamma) / (2.0 * theta - 1.0)


def psi_proviso(theta, gamma):
    """True where psi_rate holds only for alpha > 2 c^2 / N."""
    _check_window(theta, gamma)
    return theta == 0.5 and gamma == 1.0


def psi_grid(thetas, gammas):
    """psi over the product grid; shape (len(thetas), len(gammas))."""
    return np.array([[psi_rate(th, g) for g in gammas] for th in thetas])


@dataclass(frozen=True)
class RateReport:
    fitted_exponent: float
    fit_window: tuple
    residual: float
    theoretical_exponent: Optional[float]
    reference_point: np.ndarray
    points_used: int
    proviso: bool = False

    def meets(self, margin):
        """One-sided: faster decay than predicted is never a failure."""
        if self.theoretical_exponent is None:
            raise InvalidParameterError("no theoretical exponent to compare against")
        return self.fitted_exponent >= self.theoretical_exponent - margin


def estimate_rate(trajectory, reference, window_fraction=0.5, beta=None,
                  theta=None, gamma=None):
    """Fit ||x^t - x*|| ~ C (t + beta)^(-p) over the last ``window_fraction`` of epochs.

    ``trajectory`` is a Trajectory or an array of outer iterates with row t
    holding x^t.  ``beta`` defaults to the trajectory's schedule shift.  Points
    closer to the reference than 100 machine epsilons (scaled by ||x*||) are
    dropped before the least-squares fit.
    """
    outer = getattr(trajectory, "outer", trajectory)
    outer = np.asarray(outer, dtype=float)
    if outer.ndim == 1:
        outer = outer[:, None]
    sched = getattr(trajectory, "meta", {}).get("schedule", {})
    if beta is None:
        beta = sched.get("beta", 0.0)
    if gamma is None:
        gamma = sched.get("gamma")
    if not 0 < window_fraction <= 1:
        raise InvalidParameterError("window_fraction must lie in (0, 1]")
    T = len(outer) - 1
    if T < MIN_LENGTH:
        raise InsufficientDataError(f"trajectory has {T} epochs, need at least {MIN_LENGTH}")
    ref = np.asarray(reference, dtype=float).reshape(outer.shape[1])

    t_lo = max(1, T - int(math.floor(window_fraction * T)) + 1)
    t = np.arange(t_lo, T + 1)
    dist = np.linalg.norm(outer[t_lo:] - ref, axis=1)
    keep = dist > EPS_FLOOR * max(1.0, float(np.linalg.norm(ref)))
    if keep.sum() < MIN_POINTS:
        raise InsufficientDataError(f"only {int(keep.sum())} usable points in the fit window")
    X = np.log(t[keep] + beta)
    Y = np.log(dist[keep])
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    theory = None
    proviso = False
    if theta is not None and gamma is not None:
        theory = psi_rate(theta, gamma)
        proviso = psi_proviso(theta, gamma)
    return RateReport(
        fitted_exponent=float(-coef[0]),
        fit_window=(int(t[keep][0]), int(t[keep][-1])),
        residual=float(np.sqrt(np.mean(resid ** 2))),
        theoretical_exponent=theory,
        reference_point=ref,
        points_used=int(keep.sum()),
        proviso=proviso,
    )


class FiniteLength(NamedTuple):
    path_length: np.ndarray
    weighted_gradients: np.ndarray

    def late_fraction(self, which="path_length", start=0.5):
        """Share of the total accumulated after ``start`` of the run."""
        s = getattr(self, which)
        if len(s) == 0 or s[-1] == 0:
            return 0.0
        k = int(start * len(s))
        before = s[k - 1] if k > 0 else 0.0
        return float((s[-1] - before) / s[-1])


def finite_length_check(trajectory, schedule=None):
    """Partial sums of ||x^t - x^{t-1}|| and alpha_t ||grad f(x^{t-1})||, t = 1..T."""
    steps = trajectory.steps if schedule is None else schedule.steps(trajectory.epochs)
    moves = np.linalg.norm(np.diff(trajectory.outer, axis=0), axis=1)
    weighted = steps * trajectory.grad_norms[:-1]
    return FiniteLength(np.cumsum(moves), np.cumsum(weighted))


def basin_radius(problem):
    """Half the smallest gap between known stationary points (inf if only one)."""
    pts = problem.stationary_points
    if pts is None or len(pts) < 2:
        return math.inf
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    return 0.5 * float(np.min(d[np.triu_indices(len(pts), 1)]))


def choose_reference(problem, trajectory, longer_run=None):
    """Reference point x* for rate fitting.

    Use the known minimizer nearest the terminal iterate when the run
    ends inside its basin; otherwise call ``longer_run()`` (typically the same
    configuration run ten times longer) and use its terminal iterate.
    """
    final = trajectory.outer[-1]
    cands = None
    if problem.minimizer is not None:
        cands = np.atleast_2d(problem.minimizer)
        if problem.stationary_points is not None:
            # only minimizers attract; saddles and maxima have no basin
            f_min = full_value(problem, problem.minimizer)
            vals = np.array([full_value(problem, s) for s in problem.stationary_points])
            cands = problem.stationary_points[np.abs(vals - f_min) <= 1e-12 * max(1.0, abs(f_min))]
    if cands is not None:
        d = np.linalg.norm(cands - final, axis=1)
        k = int(np.argmin(d))
        if d[k] < basin_radius(problem):
            return np.array(cands[k], dtype=float)
    if longer_run is None:
        raise InvalidParameterError("run did not reach a known basin and no longer run was given")
    return np.array(longer_run().outer[-1], dtype=float)
