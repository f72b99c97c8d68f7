"""Numerical certificates for the per-epoch inequalities behind the analysis.

Each ``verify_*`` function returns a :class:`ViolationReport`.  A single check
passes iff ``lhs <= rhs + tol * max(1, |rhs|) + extra`` where ``extra`` is the
truncation remainder of any infinite series entering ``rhs``.  Epochs whose
step exceeds 1 / (sqrt(2) L N) are not checked; they are listed in
``report.inadmissible`` instead.
"""
import csv
from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import ConditionError, InvalidParameterError
from .problems import full_value, full_gradient, sample_ball
from .schedules import KAPPA, first_valid_iteration, g_constant, u_stream

DEFAULT_TOL = 1e-8


class Check(NamedTuple):
    name: str
    epoch: int
    lhs: float
    rhs: float
    slack: float
    ok: bool


@dataclass
class ViolationReport:
    name: str
    tolerance: float
    checks: list = field(default_factory=list)
    inadmissible: list = field(default_factory=list)
    note: str = ""

    def add(self, epoch, lhs, rhs, extra=0.0):
        lhs, rhs = float(lhs), float(rhs)
        ok = lhs <= rhs + self.tolerance * max(1.0, abs(rhs)) + extra
        self.checks.append(Check(self.name, int(epoch), lhs, rhs, lhs - rhs, bool(ok)))

    @property
    def status(self):
        if not self.checks:
            return "vacuous"
        return "pass" if all(c.ok for c in self.checks) else "fail"

    @property
    def passed(self):
        """True unless a non-vacuous check failed."""
        return self.status != "fail"

    @property
    def max_violation(self):
        return max((c.slack for c in self.checks if c.slack > 0), default=0.0)

    @property
    def failures(self):
        return [c for c in self.checks if not c.ok]

    def rows(self):
        for c in self.checks:
            yield [c.name, c.epoch, c.lhs, c.rhs, c.slack, "pass" if c.ok else "fail"]
        for t in self.inadmissible:
            yield [self.name, t, "", "", "", "inadmissible"]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "epoch", "lhs", "rhs", "slack", "status"])
            for row in self.rows():
                w.writerow([format_float(v) for v in row])

    def summary(self):
        bad = len(self.failures)
        line = (f"{self.status.upper():7s} {self.name}: {len(self.checks)} checks, "
                f"{bad} violations, max slack {self.max_violation:.3g}")
        if self.inadmissible:
            line += f", {len(self.inadmissible)} inadmissible epochs skipped"
        if self.note:
            line += f" ({self.note})"
        return line


def format_float(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


# ------------------------------------------------------------ trajectory checks

def _check_schedule(traj, schedule):
    expected = schedule.steps(traj.epochs)
    if not np.allclose(traj.steps, expected, rtol=1e-12, atol=0.0):
        raise InvalidParameterError("trajectory step sizes do not match the schedule")


def _kappa(traj, variant, kappa):
    if kappa is not None:
        return float(kappa)
    variant = variant or traj.meta.get("variant", "rr")
    return KAPPA[variant.lower()]


def _admissible_epochs(traj, schedule, L, N, report):
    t1 = first_valid_iteration(schedule, L, N)
    report.inadmissible = list(range(1, min(t1, traj.epochs + 1)))
    return range(t1, traj.epochs + 1)


def _step_sq(traj, t):
    d = traj.outer[t] - traj.outer[t - 1]
    return float(d @ d)


def verify_epoch_recursion(traj, problem, schedule, variant=None, kappa=None,
                           tol=DEFAULT_TOL):
    """Per-epoch recursion for the gap f(x^t) - f_min_bar.

    gap_t <= (1 + k L^3 N^3 a^3) gap_{t-1} - N a/2 ||grad f(x^{t-1})||^2
             - (1 - L N a) / (2 N a) ||x^t - x^{t-1}||^2,   a = alpha_t,

    with k = 2 for RR/IG and k = 6 for SPPM unless ``kappa`` overrides it.
    """
    _check_schedule(traj, schedule)
    k = _kappa(traj, variant, kappa)
    L, N, fbar = problem.lipschitz, problem.N, problem.f_min_bar
    report = ViolationReport(f"epoch_recursion(kappa={k:g})", tol)
    for t in _admissible_epochs(traj, schedule, L, N, report):
        a = traj.steps[t - 1]
        prev = traj.values[t - 1] - fbar
        rhs = ((1 + k * (L * N * a) ** 3) * prev
               - 0.5 * N * a * traj.grad_norms[t - 1] ** 2
               - (1 - L * N * a) / (2 * N * a) * _step_sq(traj, t))
        report.add(t, traj.values[t] - fbar, rhs)
    return report


def trajectory_g(traj, problem, schedule, variant=None, kappa=None):
    """G for a recorded run, anchored at the first admissible epoch t1.

    Returns (G, t1); G bounds f(x^t) - f_min_bar for every t >= t1 - 1.
    """
    L, N = problem.lipschitz, problem.N
    t1 = first_valid_iteration(schedule, L, N)
    if t1 - 1 > traj.epochs:
        return 0.0, t1
    gap = max(traj.values[t1 - 1] - problem.f_min_bar, 0.0)
    k = _kappa(traj, variant, kappa)
    variant = {2.0: "rr", 6.0: "sppm"}.get(k)
    if variant is None:
        raise InvalidParameterError(f"no G constant for kappa={k}")
    return g_constant(schedule, gap, variant, L, N, start=t1), t1


def verify_approx_descent(traj, problem, schedule, G, variant=None, kappa=None,
                          tol=DEFAULT_TOL):
    """f(x^t) <= f(x^{t-1}) - N a/2 ||grad||^2 - (1 - L N a)/(2 N a) ||dx||^2 + k G L^3 N^3 a^3."""
    _check_schedule(traj, schedule)
    k = _kappa(traj, variant, kappa)
    L, N = problem.lipschitz, problem.N
    report = ViolationReport(f"approx_descent(kappa={k:g})", tol)
    for t in _admissible_epochs(traj, schedule, L, N, report):
        a = traj.steps[t - 1]
        rhs = (traj.values[t - 1]
               - 0.5 * N * a * traj.grad_norms[t - 1] ** 2
               - (1 - L * N * a) / (2 * N * a) * _step_sq(traj, t)
               + k * G * (L * N * a) ** 3)
        report.add(t, traj.values[t], rhs)
    return report


def verify_variance_bound(traj, problem, schedule, tol=DEFAULT_TOL):
    """V_t = sum_{i=1..N} ||x^{t-1} - x~_{i-1}||^2 <= 4 L N^3 a^2 (f(x^{t-1}) - f_min_bar)."""
    if traj.inner is None:
        raise InvalidParameterError("variance check needs inner iterates (record_inner=True)")
    _check_schedule(traj, schedule)
    L, N, fbar = problem.lipschitz, problem.N, problem.f_min_bar
    report = ViolationReport("variance_bound", tol)
    for t in _admissible_epochs(traj, schedule, L, N, report):
        a = traj.steps[t - 1]
        dev = traj.inner[t - 1, :N] - traj.outer[t - 1]
        report.add(t, np.sum(dev * dev), 4 * L * N ** 3 * a * a * (traj.values[t - 1] - fbar))
    return report


def verify_lyapunov_monotone(traj, schedule, G, L, N, kappa=2.0, start=None,
                             tol=DEFAULT_TOL):
    """f(x^t) + u_t <= f(x^{t-1}) + u_{t-1} on admissible epochs."""
    _check_schedule(traj, schedule)
    report = ViolationReport("lyapunov_monotone", tol)
    if schedule.gamma <= 1.0 / 3.0:
        report.note = "u_t infinite for gamma <= 1/3"
        report.inadmissible = list(range(1, traj.epochs + 1))
        return report
    u, rem = u_stream(schedule, G, L, N, traj.epochs, kappa)
    epochs = _admissible_epochs(traj, schedule, L, N, report)
    if start is not None:
        report.inadmissible = list(range(1, min(start, traj.epochs + 1)))
        epochs = range(start, traj.epochs + 1)
    for t in epochs:
        report.add(t, traj.values[t] + u[t], traj.values[t - 1] + u[t - 1], extra=rem)
    return report


def non_descent_epochs(traj):
    """Epochs t with f(x^t) > f(x^{t-1})."""
    return [t for t in range(1, len(traj.values)) if traj.values[t] > traj.values[t - 1]]


# ------------------------------------------------------------- pointwise checks

def verify_component_grad_bound(problem, points, tol=DEFAULT_TOL):
    """||grad f(x,i)||^2 <= 2 L (f(x,i) - f_min_bar) for every i at every point."""
    L, fbar = problem.lipschitz, problem.f_min_bar
    report = ViolationReport("component_grad_bound", tol)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    for i in range(problem.N):
        g = problem.component_gradient(points, i)
        lhs = np.sum(g * g, axis=-1)
        rhs = 2 * L * (problem.component_value(points, i) - fbar)
        for k in range(len(points)):
            report.add(k, lhs[k], rhs[k])
    return report


def verify_descent_lemma(problem, pairs, tol=DEFAULT_TOL):
    """f(y,i) - f(x,i) - <grad f(x,i), y - x> <= L/2 ||y - x||^2 for every i."""
    L = problem.lipschitz
    report = ViolationReport("descent_lemma", tol)
    for k, (x, y) in enumerate(pairs):
        x = np.asarray(x, dtype=float)
        d = np.asarray(y, dtype=float) - x
        for i in range(problem.N):
            lhs = (problem.component_value(x + d, i) - problem.component_value(x, i)
                   - problem.component_gradient(x, i) @ d)
            report.add(k, lhs, 0.5 * L * (d @ d))
    return report


def kl_sample_points(problem, count, seed=0, kl=None):
    """Points with 0 < |f(x) - f*| < eta, spread log-uniformly in distance.

    Centres are the minimizer and, when stationary points are known, every
    stationary point sharing the minimizer's value.
    """
    kl = kl or problem.kl
    if kl is None or problem.minimizer is None:
        return np.empty((0, problem.n))
    centres = [np.asarray(problem.minimizer, dtype=float)]
    if problem.stationary_points is not None:
        vals = np.array([full_value(problem, s) for s in problem.stationary_points])
        centres = list(problem.stationary_points[np.abs(vals - kl.f_star) < 1e-12])
    rng = np.random.default_rng(seed)
    rmax = problem.working_radius if math.isinf(kl.eta) else min(problem.working_radius, 1.0)
    out = []
    for _ in range(50):
        m = 4 * count
        v = rng.standard_normal((m, problem.n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = rmax * 10.0 ** (-4.0 * rng.random(m))
        c = np.array(centres)[rng.integers(len(centres), size=m)]
        pts = c + v * r[:, None]
        gap = np.abs(np.array([full_value(problem, x) for x in pts]) - kl.f_star)
        out.extend(pts[(gap > 0) & (gap < kl.eta)])
        if len(out) >= count:
            break
    return np.array(out[:count]).reshape(-1, problem.n)


def kl_inequality_check(problem, kl, points, tol=DEFAULT_TOL):
    """|f(x) - f*|^theta <= c (1 - theta) ||grad f(x)|| at admissible points.

    Points outside 0 < |f - f*| < eta are dropped; none left means vacuous.
    """
    report = ViolationReport(f"kl_inequality(theta={kl.theta:g})", tol)
    for k, x in enumerate(np.atleast_2d(np.asarray(points, dtype=float))):
        gap = abs(full_value(problem, x) - kl.f_star)
        if not 0 < gap < kl.eta:
            continue
        rhs = kl.c * (1 - kl.theta) * np.linalg.norm(full_gradient(problem, x))
        report.add(k, gap ** kl.theta, rhs)
    if not report.checks:
        report.note = "no points with 0 < |f - f*| < eta"
    return report


# --------------------------------------------------------------------- suite

def run_suite(traj, problem, schedule, variant=None, tol=DEFAULT_TOL, n_points=200, seed=0):
    """Every applicable check on one trajectory; returns a list of reports."""
    variant = (variant or traj.meta.get("variant", "rr")).lower()
    k = KAPPA[variant]
    L, N = problem.lipschitz, problem.N
    reports = [verify_epoch_recursion(traj, problem, schedule, variant, tol=tol)]
    try:
        G, t1 = trajectory_g(traj, problem, schedule, variant)
    except ConditionError as exc:
        for name in ("approx_descent", "lyapunov_monotone"):
            r = ViolationReport(name, tol, note=str(exc))
            r.inadmissible = list(range(1, traj.epochs + 1))
            reports.append(r)
    else:
        reports.append(verify_approx_descent(traj, problem, schedule, G, variant, tol=tol))
        reports.append(verify_lyapunov_monotone(traj, schedule, G, L, N, k, start=t1, tol=tol))
    if traj.inner is not None:
        reports.append(verify_variance_bound(traj, problem, schedule, tol=tol))
    else:
        reports.append(ViolationReport("variance_bound", tol, note="no inner iterates"))

    rng = np.random.default_rng(seed)
    ball = sample_ball(rng, problem.n, problem.working_radius, n_points)
    pts = np.concatenate([ball, traj.outer])
    reports.append(verify_component_grad_bound(problem, pts, tol=tol))
    if traj.inner is not None:
        flat = traj.inner.reshape(-1, problem.n)
        pairs = list(zip(flat[:-1], flat[1:]))
    else:
        pairs = list(zip(traj.outer[:-1], traj.outer[1:]))
    other = sample_ball(rng, problem.n, problem.working_radius, n_points)
    pairs += list(zip(ball, other))
    reports.append(verify_descent_lemma(problem, pairs, tol=tol))
    if problem.kl is not None:
        reports.append(kl_inequality_check(problem, problem.kl,
                                           kl_sample_points(problem, n_points, seed), tol=tol))
    return reports


# ------------------------------------------------------------- recursion oracle

class PolyakResult(NamedTuple):
    z: np.ndarray
    limit_estimate: float
    predicted: float


def _polyak_python(mode_b, q, p, b, d, s, tau, z1, K):
    z = np.empty(K)
    z[0] = z1
    for k in range(1, K):
        kb = k + b
        if mode_b:
            z[k] = (1.0 - q / kb ** s) * z[k - 1] + d / kb ** tau
        else:
            z[k] = (1.0 - q / kb) * z[k - 1] + d / kb ** (p + 1.0)
    return z


def polyak_recursion_oracle(q, d, mode="A", p=None, b=0.0, s=None, tau=None, z1=1.0, K=10 ** 5):
    """Simulate the scalar recursions whose decay drives the rate proofs.

    Mode A: z_{k+1} = (1 - q/(k+b)) z_k + d/(k+b)^(p+1), needs q > p > 0;
    z_K (K+b)^p approaches d/(q-p).
    Mode B: z_{k+1} = (1 - q/(k+b)^s) z_k + d/(k+b)^tau, needs q > 0,
    0 < s < 1 and tau > s; z_K (K+b)^(tau-s) approaches d/q.

    ``z[k-1]`` holds z_k, so ``z[-1]`` is z_K.
    """
    mode = mode.upper()
    if d < 0 or K < 2 or b <= -1:
        raise InvalidParameterError("need d >= 0, K >= 2 and b > -1")
    if mode == "A":
        if p is None or not q > p > 0:
            raise InvalidParameterError("mode A needs q > p > 0")
        z = _run_polyak(False, q, p, b, d, 0.0, 0.0, z1, K)
        return PolyakResult(z, float(z[-1] * (K + b) ** p), d / (q - p))
    if mode == "B":
        if s is None or tau is None or not (0 < s < 1 and tau > s and q > 0):
            raise InvalidParameterError("mode B needs q > 0, 0 < s < 1 and tau > s")
        z = _run_polyak(True, q, 0.0, b, d, s, tau, z1, K)
        return PolyakResult(z, float(z[-1] * (K + b) ** (tau - s)), d / q)
    raise InvalidParameterError(f"mode must be 'A' or 'B', got {mode!r}")


def _run_polyak(mode_b, q, p, b, d, s, tau, z1, K):
    args = (mode_b, float(q), float(p), float(b), float(d), float(s), float(tau), float(z1), int(K))
    if _backend.use_numba():
        from . import _jit
        return _jit.polyak(*args)
    return _polyak_python(*args)
