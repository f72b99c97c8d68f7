"""Random Reshuffling, Incremental Gradient and the Shuffled Proximal Point Method.

All three share one epoch structure: start the epoch at the previous outer
iterate, visit every component once in the order of that epoch's permutation,
and take the last inner iterate as the next outer iterate.  RR and IG take an
explicit gradient step per component; SPPM takes an exact proximal step, which
is the implicit gradient step z = x - alpha * grad f(z, i).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidParameterError, NumericalFailure
from .permutations import PermutationSource
from .problems import full_gradient, full_value

PROX_TOL = 1e-10
PROX_MAX_ITER = 10 ** 4
VARIANTS = ("rr", "ig", "sppm")


@dataclass
class Trajectory:
    """Recorded run.  Row t of ``outer`` is x^t; ``steps[t-1]`` is alpha_t.

    ``inner[t-1, i]`` is the i-th inner iterate of epoch t (i = 0..N) when
    inner recording was on.  ``perms[t-1]`` is the 0-based order of epoch t.
    """

    outer: np.ndarray
    values: np.ndarray
    grad_norms: np.ndarray
    steps: np.ndarray
    perms: np.ndarray
    inner: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def epochs(self):
        return len(self.steps)


def _prox_python(problem, x, i, a):
    if problem.component_prox is not None:
        return problem.component_prox(x, i, a), 0.0, True
    grad = problem.component_gradient
    z = x - a * grad(x, i)
    eta = a / (1.0 + a * problem.lipschitz)
    residual = np.inf
    for _ in range(PROX_MAX_ITER + 1):
        g = grad(z, i)
        residual = float(np.linalg.norm(z - x + a * g))
        if residual <= PROX_TOL:
            return z, residual, True
        if not np.isfinite(residual):
            break
        z = z - eta * (g + (z - x) / a)
    return z, residual, False


def rr_epoch(problem, x, alpha_t, perm, inner=None):
    """One RR epoch from ``x``; appends the inner iterates to ``inner`` if given."""
    if alpha_t <= 0:
        raise InvalidParameterError("step size must be positive")
    x = np.array(x, dtype=float)
    if inner is not None:
        inner.append(x.copy())
    for k, i in enumerate(perm):
        x = x - alpha_t * problem.component_gradient(x, i)
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("non-finite iterate", epoch=None, index=k + 1)
        if inner is not None:
            inner.append(x.copy())
    return x


def sppm_epoch(problem, x, alpha_t, perm, inner=None):
    """One SPPM epoch; each step solves min f(z, i) + ||z - x||^2 / (2 alpha_t)."""
    if alpha_t <= 0:
        raise InvalidParameterError("step size must be positive")
    x = np.array(x, dtype=float)
    if inner is not None:
        inner.append(x.copy())
    for k, i in enumerate(perm):
        x, residual, ok = _prox_python(problem, x, i, alpha_t)
        if not ok:
            raise NumericalFailure("proximal subproblem did not converge",
                                   epoch=None, index=k + 1, residual=residual)
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("non-finite iterate", epoch=None, index=k + 1)
        if inner is not None:
            inner.append(x.copy())
    return x


def _run_python(problem, x0, steps, perms, variant, record_inner):
    T, N = perms.shape
    outer = np.empty((T + 1, problem.n))
    outer[0] = x0
    inner = np.empty((T, N + 1, problem.n)) if record_inner else None
    epoch = sppm_epoch if variant == "sppm" else rr_epoch
    x = x0
    for t in range(T):
        buf = [] if record_inner else None
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                x = epoch(problem, x, steps[t], perms[t], buf)
        except NumericalFailure as exc:
            failure = (t + 1, exc.index, exc.residual, exc.reason)
            return outer[:t + 1], (inner[:t] if record_inner else None), failure
        outer[t + 1] = x
        if record_inner:
            inner[t] = buf
    return outer, inner, None


def _run_numba(problem, x0, steps, perms, variant, record_inner):
    from . import _jit
    kind, shift, diag, p, R = problem.kernel
    T, N = perms.shape
    inner = np.empty((T, N + 1, problem.n)) if record_inner else np.empty((1, 1, 1))
    if variant == "sppm":
        outer, status, t_fail, i_fail, residual = _jit.sppm_run(
            kind, shift, diag, p, R, problem.lipschitz, x0, steps, perms,
            record_inner, inner, PROX_TOL, PROX_MAX_ITER)
    else:
        outer, status, t_fail, i_fail, residual = _jit.rr_run(
            kind, shift, diag, p, R, x0, steps, perms, record_inner, inner)
    if status != _jit.OK:
        reason = ("proximal subproblem did not converge" if status == _jit.PROX_STALLED
                  else "non-finite iterate")
        failure = (t_fail, i_fail, residual, reason)
        return outer[:t_fail], (inner[:t_fail - 1] if record_inner else None), failure
    return outer, (inner if record_inner else None), None


def evaluate(problem, points):
    """Full value and gradient norm at each row of ``points``."""
    points = np.asarray(points, dtype=float)
    if problem.kernel is not None and _backend.use_numba():
        from . import _jit
        kind, shift, diag, p, R = problem.kernel
        return _jit.full_value_grad(kind, shift, diag, p, R, np.ascontiguousarray(points))
    # finite but huge iterates may overflow to inf, which is the honest value
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.array([full_value(problem, x) for x in points], dtype=float)
        gnorms = np.array([np.linalg.norm(full_gradient(problem, x)) for x in points])
    return values, gnorms


def run(problem, x0, schedule, epochs, source=None, variant="rr", record_inner=False):
    """Run ``epochs`` epochs and return the full :class:`Trajectory`.

    ``variant`` is ``"rr"``, ``"ig"`` or ``"sppm"``; ``"ig"`` forces the
    identity order.  The run is a pure function of its arguments.  A
    non-finite iterate or a stalled proximal solve raises
    :class:`NumericalFailure` whose ``trajectory`` holds the completed epochs.
    """
    variant = variant.lower()
    if variant not in VARIANTS:
        raise InvalidParameterError(f"variant must be one of {VARIANTS}")
    if epochs < 1:
        raise InvalidParameterError("epochs must be >= 1")
    x0 = np.array(x0, dtype=float).reshape(problem.n)
    if not np.all(np.isfinite(x0)):
        raise InvalidParameterError("x0 must be finite")
    if variant == "ig" or source is None:
        if variant != "ig" and source is None:
            raise InvalidParameterError("RR and SPPM need a permutation source")
        source = PermutationSource.identity()

    steps = schedule.steps(epochs)
    perms = source.batch(1, epochs, problem.N)
    if problem.kernel is not None and _backend.use_numba():
        outer, inner, failure = _run_numba(problem, x0, steps, perms, variant, record_inner)
    else:
        outer, inner, failure = _run_python(problem, x0, steps, perms, variant, record_inner)

    done = len(outer) - 1
    values, gnorms = evaluate(problem, outer)
    meta = {
        "problem": problem.name, "variant": variant, "schedule": schedule.as_dict(),
        "seed": source.seed if source.mode == "uniform" else None,
        "source": source.mode, "epochs": epochs, "n": problem.n, "N": problem.N,
    }
    traj = Trajectory(outer=outer, values=values, grad_norms=gnorms,
                      steps=steps[:done], perms=perms[:done], inner=inner, meta=meta)
    if failure is not None:
        t, i, residual, reason = failure
        raise NumericalFailure(reason, epoch=t, index=i, residual=residual, trajectory=traj)
    return traj
