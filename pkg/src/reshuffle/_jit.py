"""Numba kernels for the hot loops.

Every kernel here has a numpy/Python twin elsewhere in the package
(``optim._run_python``, ``permutations._fisher_yates_python``,
``verify._polyak_python``); ``tests/test_backends.py`` checks that both paths
agree.  Problem families are passed as a small integer code plus dense
parameter arrays, since numba cannot call the Python closures stored on a
:class:`~reshuffle.problems.FiniteSumProblem`.
"""
import numpy as np
from numba import njit

QUADRATIC = 0
POWER = 1
DOUBLE_WELL = 2

OK = 0
NONFINITE = 1
PROX_STALLED = 2

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _dw_slope(s, R):
    a = abs(s)
    if a <= R:
        return (s * s - 1.0) * s
    slope = (R * R - 1.0) * R + (3.0 * R * R - 1.0) * (a - R)
    if s < 0.0:
        return -slope
    return slope


@njit(cache=True)
def component_grad(kind, shift, diag, p, R, x, i, out):
    n = x.shape[0]
    if kind == QUADRATIC:
        for j in range(n):
            out[j] = diag[j] * (x[j] - shift[i, j])
    elif kind == POWER:
        r2 = 0.0
        for j in range(n):
            r2 += x[j] * x[j]
        r = np.sqrt(r2)
        scale = min(r, R) ** (2 * p - 2)
        for j in range(n):
            out[j] = scale * x[j] + shift[i, j]
    else:
        for j in range(n):
            out[j] = _dw_slope(x[j], R) + shift[i, j]


@njit(cache=True)
def _all_finite(x):
    for j in range(x.shape[0]):
        if not np.isfinite(x[j]):
            return False
    return True


@njit(cache=True)
def rr_run(kind, shift, diag, p, R, x0, steps, perms, record_inner, inner):
    """Run ``len(steps)`` RR epochs; returns (outer, status, epoch, step).

    ``inner`` must have shape (T, N+1, n) when ``record_inner`` is set.
    On failure ``outer`` rows past the last completed epoch are garbage.
    """
    T = steps.shape[0]
    N = perms.shape[1]
    n = x0.shape[0]
    outer = np.empty((T + 1, n))
    outer[0] = x0
    x = x0.copy()
    g = np.empty(n)
    for t in range(T):
        a = steps[t]
        if record_inner:
            inner[t, 0] = x
        for k in range(N):
            component_grad(kind, shift, diag, p, R, x, perms[t, k], g)
            for j in range(n):
                x[j] = x[j] - a * g[j]
            if not _all_finite(x):
                return outer, NONFINITE, t + 1, k + 1, np.nan
            if record_inner:
                inner[t, k + 1] = x
        outer[t + 1] = x
    return outer, OK, 0, 0, 0.0


@njit(cache=True)
def prox_step(kind, shift, diag, p, R, L, x, i, a, tol, max_iter, z, g):
    """Write prox_{a f(., i)}(x) into ``z``; return (converged, residual)."""
    n = x.shape[0]
    if kind == QUADRATIC:
        for j in range(n):
            z[j] = (x[j] + a * diag[j] * shift[i, j]) / (1.0 + a * diag[j])
        return True, 0.0
    component_grad(kind, shift, diag, p, R, x, i, g)
    for j in range(n):
        z[j] = x[j] - a * g[j]
    eta = a / (1.0 + a * L)
    residual = np.inf
    for _ in range(max_iter + 1):
        component_grad(kind, shift, diag, p, R, z, i, g)
        res2 = 0.0
        for j in range(n):
            d = z[j] - x[j] + a * g[j]
            res2 += d * d
        residual = np.sqrt(res2)
        if residual <= tol:
            return True, residual
        if not np.isfinite(residual):
            return False, residual
        for j in range(n):
            z[j] = z[j] - eta * (g[j] + (z[j] - x[j]) / a)
    return False, residual


@njit(cache=True)
def sppm_run(kind, shift, diag, p, R, L, x0, steps, perms, record_inner, inner,
             tol, max_iter):
    T = steps.shape[0]
    N = perms.shape[1]
    n = x0.shape[0]
    outer = np.empty((T + 1, n))
    outer[0] = x0
    x = x0.copy()
    z = np.empty(n)
    g = np.empty(n)
    for t in range(T):
        a = steps[t]
        if record_inner:
            inner[t, 0] = x
        for k in range(N):
            ok, residual = prox_step(kind, shift, diag, p, R, L, x, perms[t, k],
                                     a, tol, max_iter, z, g)
            if not ok:
                return outer, PROX_STALLED, t + 1, k + 1, residual
            if not _all_finite(z):
                return outer, NONFINITE, t + 1, k + 1, residual
            x[:] = z
            if record_inner:
                inner[t, k + 1] = x
        outer[t + 1] = x
    return outer, OK, 0, 0, 0.0


@njit(cache=True)
def full_value_grad(kind, shift, diag, p, R, X):
    """Mean component value and gradient norm at every row of ``X``."""
    m, n = X.shape
    N = shift.shape[0]
    values = np.empty(m)
    gnorms = np.empty(m)
    g = np.empty(n)
    acc = np.empty(n)
    for r in range(m):
        x = X[r]
        total = 0.0
        acc[:] = 0.0
        for i in range(N):
            total += component_value(kind, shift, diag, p, R, x, i)
            component_grad(kind, shift, diag, p, R, x, i, g)
            for j in range(n):
                acc[j] += g[j]
        values[r] = total / N
        s = 0.0
        for j in range(n):
            s += (acc[j] / N) ** 2
        gnorms[r] = np.sqrt(s)
    return values, gnorms


@njit(cache=True)
def component_value(kind, shift, diag, p, R, x, i):
    n = x.shape[0]
    lin = 0.0
    if kind == QUADRATIC:
        v = 0.0
        for j in range(n):
            d = x[j] - shift[i, j]
            v += diag[j] * d * d
        return 0.5 * v
    for j in range(n):
        lin += shift[i, j] * x[j]
    if kind == POWER:
        r2 = 0.0
        for j in range(n):
            r2 += x[j] * x[j]
        r = np.sqrt(r2)
        if r <= R:
            return r ** (2 * p) / (2 * p) + lin
        return (R ** (2 * p - 2) * r2 / 2 + R ** (2 * p) * (1.0 / (2 * p) - 0.5)) + lin
    v = 0.0
    wR = 0.25 * (R * R - 1.0) ** 2
    sR = (R * R - 1.0) * R
    M = 3.0 * R * R - 1.0
    for j in range(n):
        a = abs(x[j])
        if a <= R:
            v += 0.25 * (x[j] * x[j] - 1.0) ** 2
        else:
            e = a - R
            v += wR + sR * e + 0.5 * M * e * e
    return v + lin


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def fisher_yates(seed, t0, count, N):
    """Permutations for epochs t0 .. t0+count-1 (0-based entries)."""
    out = np.empty((count, N), dtype=np.int64)
    s = np.uint64(seed)
    for c in range(count):
        t = np.uint64(t0 + c)
        key = _mix(s + t * _GAMMA)
        for k in range(N):
            out[c, k] = k
        ctr = np.uint64(0)
        for i in range(N - 1, 0, -1):
            bound = np.uint64(i + 1)
            thresh = (np.uint64(0) - bound) % bound
            r = np.uint64(0)
            while True:
                ctr += np.uint64(1)
                r = _mix(key + ctr * _GAMMA)
                if r >= thresh:
                    break
            j = np.int64(r % bound)
            tmp = out[c, i]
            out[c, i] = out[c, j]
            out[c, j] = tmp
    return out


@njit(cache=True)
def polyak(mode_b, q, p, b, d, s, tau, z1, K):
    z = np.empty(K)
    z[0] = z1
    for k in range(1, K):
        kb = k + b
        if mode_b:
            z[k] = (1.0 - q / kb ** s) * z[k - 1] + d / kb ** tau
        else:
            z[k] = (1.0 - q / kb) * z[k - 1] + d / kb ** (p + 1.0)
    return z
