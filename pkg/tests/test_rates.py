import math

import numpy as np
import pytest

from reshuffle import (InsufficientDataError, InvalidParameterError, PermutationSource,
                       StepSchedule, make_double_well, make_problem, run)
from reshuffle.rates import (basin_radius, choose_reference, estimate_rate, finite_length_check,
                            psi_boundary, psi_grid, psi_proviso, psi_rate)


# -------------------------------------------------------------------- psi

def test_psi_spot_values():
    assert psi_rate(0.3, 1.0) == 1.0
    assert psi_rate(0.6, 0.75) == pytest.approx(0.5, abs=1e-15)
    assert psi_rate(0.5, 1.0) == 1.0
    assert psi_proviso(0.5, 1.0)
    assert not psi_proviso(0.3, 1.0)


@pytest.mark.parametrize("gamma", [0.6, 0.75, 0.9])
def test_psi_continuity_on_boundary(gamma):
    th = psi_boundary(gamma)
    first = 2 * gamma - 1
    second = (1 - th) * (1 - gamma) / (2 * th - 1)
    assert abs(first - second) < 1e-12
    below = psi_rate(math.nextafter(th, 0), gamma)
    assert abs(psi_rate(th, gamma) - below) < 1e-12


def test_psi_increases_with_gamma_on_first_branch():
    for theta in (0.0, 0.2, 0.4, 0.5):
        gammas = [g for g in np.linspace(0.51, 1.0, 40) if theta < psi_boundary(g)]
        vals = [psi_rate(theta, g) for g in gammas]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_psi_nonnegative_and_gamma_one_second_branch():
    grid = psi_grid(np.linspace(0, 0.99, 34), np.linspace(0.51, 1.0, 25))
    assert np.all(grid >= 0)
    assert psi_rate(0.8, 1.0) == 0.0


@pytest.mark.parametrize("theta,gamma", [(-0.1, 1), (1.0, 1), (0.5, 0.5), (0.5, 1.01)])
def test_psi_window(theta, gamma):
    with pytest.raises(InvalidParameterError):
        psi_rate(theta, gamma)


# -------------------------------------------------------------- estimator

def _synthetic(p, T=1000, noise=0.0, seed=0, ref=(1.0, -2.0)):
    rng = np.random.default_rng(seed)
    ref = np.array(ref)
    v = np.array([0.6, 0.8])
    t = np.arange(T + 1, dtype=float)
    scale = np.where(t > 0, np.maximum(t, 1) ** -p, 1.0)
    if noise:
        scale = scale * (1 + rng.uniform(-noise, noise, T + 1))
    return ref + scale[:, None] * v, ref


@pytest.mark.parametrize("p", [1.0, 0.5])
def test_exact_power_law(p):
    outer, ref = _synthetic(p)
    r = estimate_rate(outer, ref, beta=0.0)
    assert r.fitted_exponent == pytest.approx(p, abs=1e-6)
    assert r.fit_window == (501, 1000)
    assert r.points_used == 500
    assert r.residual < 1e-10


@pytest.mark.parametrize("p", [0.3, 1.0, 1.7])
@pytest.mark.parametrize("seed", range(5))
def test_noisy_power_law(p, seed):
    outer, ref = _synthetic(p, T=2000, noise=0.1, seed=seed)
    r = estimate_rate(outer, ref, beta=0.0)
    assert r.points_used >= 1000
    assert abs(r.fitted_exponent - p) <= 0.05


def test_beta_shift_recovered():
    t = np.arange(0, 501, dtype=float)
    outer = ((t + 3.0) ** -0.8)[:, None]
    assert estimate_rate(outer, [0.0], beta=3.0).fitted_exponent == pytest.approx(0.8, abs=1e-9)


def test_too_short_or_degenerate():
    outer, ref = _synthetic(1.0, T=99)
    with pytest.raises(InsufficientDataError):
        estimate_rate(outer, ref)
    flat = np.zeros((300, 2))
    flat[:150] = 1.0
    with pytest.raises(InsufficientDataError):
        estimate_rate(flat, [0.0, 0.0])


def test_theory_attached_from_meta():
    p = make_problem("quadratic")
    s = StepSchedule(4 * 2 * p.kl.c ** 2 / p.N, 0, 1.0)
    tr = run(p, np.full(p.n, 0.5), s, 400, PermutationSource.uniform(1))
    r = estimate_rate(tr, p.minimizer, theta=0.5)
    assert r.theoretical_exponent == 1.0 and r.proviso
    with pytest.raises(InvalidParameterError):
        estimate_rate(tr, p.minimizer).meets(0.2)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_quadratic_rate_at_large_alpha(seed):
    p = make_problem("quadratic")
    s = StepSchedule(4 * 2 * p.kl.c ** 2 / p.N, 0, 1.0)
    tr = run(p, np.full(p.n, 0.5), s, 10 ** 4, PermutationSource.uniform(seed))
    assert estimate_rate(tr, p.minimizer).fitted_exponent >= 0.8


# ----------------------------------------------------------- finite length

def test_finite_length_zero_at_stationary_start():
    p = make_problem("quadratic", N=1)
    s = StepSchedule(0.1, 0, 1.0)
    tr = run(p, p.minimizer, s, 50, PermutationSource.uniform(1))
    fl = finite_length_check(tr, s)
    assert np.all(fl.path_length == 0) and np.all(fl.weighted_gradients == 0)
    assert fl.late_fraction() == 0.0


def test_finite_length_streams_by_hand():
    p = make_problem("quadratic", N=1)
    s = StepSchedule(0.1, 0, 1.0)
    tr = run(p, np.ones(p.n), s, 5, PermutationSource.uniform(1))
    fl = finite_length_check(tr, s)
    moves = [np.linalg.norm(tr.outer[t] - tr.outer[t - 1]) for t in range(1, 6)]
    assert fl.path_length == pytest.approx(np.cumsum(moves))
    assert fl.weighted_gradients == pytest.approx(np.cumsum(s.steps(5) * tr.grad_norms[:-1]))


def test_finite_length_inadmissible_gamma_reported():
    p = make_problem("quadratic", N=1)
    s = StepSchedule(0.05, 0, 0.2)
    tr = run(p, np.ones(p.n), s, 2000, PermutationSource.uniform(1))
    fl = finite_length_check(tr, s)
    assert 0.0 <= fl.late_fraction() <= 1.0


# --------------------------------------------------------------- reference

def test_basin_radius():
    p = make_double_well(1, 1, [[0.0]], 2.0)
    assert basin_radius(p) == pytest.approx(0.5)
    assert basin_radius(make_problem("quadratic")) == math.inf


def test_choose_reference_inside_basin():
    p = make_double_well(1, 1, [[0.0]], 2.0)
    s = StepSchedule(0.2, 0, 0.75)
    tr = run(p, [0.8], s, 300, PermutationSource.uniform(1))
    assert choose_reference(p, tr) == pytest.approx([1.0])


def test_choose_reference_falls_back_to_longer_run():
    p = make_double_well(1, 1, [[0.0]], 2.0)
    s = StepSchedule(1e-4, 0, 1.0)
    # parked next to the local maximum at 0, far from both minima
    tr = run(p, [0.3], s, 100, PermutationSource.uniform(1))
    with pytest.raises(InvalidParameterError):
        choose_reference(p, tr)
    longer = run(p, [0.3], s, 1000, PermutationSource.uniform(1))
    assert choose_reference(p, tr, lambda: longer) == pytest.approx(longer.outer[-1])
