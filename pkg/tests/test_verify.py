import dataclasses
import math

import numpy as np
import pytest

from reshuffle import (InvalidParameterError, KLDescriptor, PermutationSource, StepSchedule,
                       admissible_bound, make_problem, make_quadratic, run)
from reshuffle.verify import (kl_inequality_check, non_descent_epochs, polyak_recursion_oracle,
                              run_suite, trajectory_g, verify_approx_descent,
                              verify_component_grad_bound, verify_epoch_recursion,
                              verify_lyapunov_monotone, verify_variance_bound)


def admissible(problem, gamma=1.0, beta=0.0):
    return StepSchedule(admissible_bound(problem.lipschitz, problem.N), beta, gamma)


@pytest.fixture(scope="module")
def quad_run():
    p = make_problem("quadratic")
    s = admissible(p)
    return p, s, run(p, np.zeros(p.n), s, 200, PermutationSource.uniform(1), record_inner=True)


@pytest.fixture(scope="module")
def witness():
    # started at the minimizer the reshuffling noise pushes f upwards
    p = make_problem("quadratic")
    s = admissible(p, gamma=0.75)
    return p, s, run(p, p.minimizer, s, 200, PermutationSource.uniform(1))


# -------------------------------------------------------------- recursions

def test_quadratic_recursion_passes(quad_run):
    p, s, tr = quad_run
    rep = verify_epoch_recursion(tr, p, s)
    assert rep.status == "pass" and len(rep.checks) == 200


def test_inflated_value_is_flagged(quad_run):
    p, s, tr = quad_run
    values = tr.values.copy()
    values[57] += 1.0
    bad = dataclasses.replace(tr, values=values)
    rep = verify_epoch_recursion(bad, p, s)
    assert rep.status == "fail"
    assert [c.epoch for c in rep.failures] == [57]


def test_sppm_recursion_needs_kappa_six(builtin):
    s = admissible(builtin, gamma=0.75)
    tr = run(builtin, np.full(builtin.n, 0.5), s, 200, PermutationSource.uniform(2), "sppm")
    assert verify_epoch_recursion(tr, builtin, s).name.startswith("epoch_recursion(kappa=6")
    assert verify_epoch_recursion(tr, builtin, s).status == "pass"


def test_schedule_mismatch(quad_run):
    p, _, tr = quad_run
    with pytest.raises(InvalidParameterError):
        verify_epoch_recursion(tr, p, StepSchedule(0.5, 0, 1.0))


def test_inadmissible_epochs_are_skipped():
    p = make_problem("quadratic")
    s = StepSchedule(3 * admissible_bound(p.lipschitz, p.N), 0, 1.0)
    tr = run(p, np.zeros(p.n), s, 20, PermutationSource.uniform(1))
    rep = verify_epoch_recursion(tr, p, s)
    # alpha_t = 3 bound / t is admissible from t = 3 on
    assert rep.inadmissible == [1, 2]
    assert [c.epoch for c in rep.checks] == list(range(3, 21))
    assert any(r[-1] == "inadmissible" for r in rep.rows())


def test_approx_descent_passes(quad_run):
    p, s, tr = quad_run
    G, t1 = trajectory_g(tr, p, s)
    assert t1 == 1 and G > 0
    assert verify_approx_descent(tr, p, s, G).status == "pass"


def test_zero_allowance_flags_ascent(witness):
    p, s, tr = witness
    up = non_descent_epochs(tr)
    assert up
    rep = verify_approx_descent(tr, p, s, 0.0)
    assert rep.status == "fail"
    # without the allowance every visible ascent is a violation
    clear = {t for t in up if tr.values[t] - tr.values[t - 1] > 1e-6}
    assert 1 in clear
    assert clear <= {c.epoch for c in rep.failures}


def test_single_component_is_gradient_descent():
    p = make_problem("quadratic", N=1)
    s = admissible(p)
    tr = run(p, np.full(p.n, 2.0), s, 100, PermutationSource.uniform(1))
    assert non_descent_epochs(tr) == []
    G, _ = trajectory_g(tr, p, s)
    rep = verify_approx_descent(tr, p, s, G)
    assert rep.status == "pass"
    assert max(c.slack for c in rep.checks) < 0
    assert verify_lyapunov_monotone(tr, s, 0.0, p.lipschitz, p.N).status == "pass"


# --------------------------------------------------------------- variance

def test_variance_requires_inner():
    p = make_problem("quadratic")
    s = admissible(p)
    tr = run(p, np.zeros(p.n), s, 5, PermutationSource.uniform(1))
    with pytest.raises(InvalidParameterError):
        verify_variance_bound(tr, p, s)


def test_variance_bound_passes(quad_run):
    p, s, tr = quad_run
    assert np.array_equal(tr.inner[:, 0], tr.outer[:-1])
    assert verify_variance_bound(tr, p, s).status == "pass"


def test_variance_scales_quadratically():
    p = make_problem("quadratic")
    x0 = np.full(p.n, 1.0)
    V = []
    for a in (0.01, 0.005):
        tr = run(p, x0, StepSchedule(a, 0, 1.0), 1, PermutationSource.uniform(4), record_inner=True)
        dev = tr.inner[0, :p.N] - tr.outer[0]
        V.append(np.sum(dev * dev))
    assert V[0] / V[1] == pytest.approx(4.0, rel=0.05)


# -------------------------------------------------------------- Lyapunov

def test_lyapunov_holds_while_f_ascends(witness):
    p, s, tr = witness
    assert len(non_descent_epochs(tr)) > 0
    G, t1 = trajectory_g(tr, p, s)
    rep = verify_lyapunov_monotone(tr, s, G, p.lipschitz, p.N, start=t1)
    assert rep.status == "pass"


def test_lyapunov_vacuous_below_one_third():
    p = make_problem("quadratic")
    s = StepSchedule(0.01, 0, 0.3)
    tr = run(p, np.zeros(p.n), s, 10, PermutationSource.uniform(1))
    rep = verify_lyapunov_monotone(tr, s, 1.0, p.lipschitz, p.N)
    assert rep.status == "vacuous" and rep.passed
    assert len(rep.inadmissible) == 10


def test_suite_marks_divergent_g():
    p = make_problem("quadratic")
    s = StepSchedule(0.01, 0, 0.3)
    tr = run(p, np.zeros(p.n), s, 10, PermutationSource.uniform(1))
    reps = {r.name.split("(")[0]: r for r in run_suite(tr, p, s, "rr", n_points=20)}
    assert reps["approx_descent"].status == "vacuous"
    assert reps["lyapunov_monotone"].inadmissible == list(range(1, 11))


def test_suite_passes_on_witness(witness):
    p, s, tr = witness
    assert all(r.passed for r in run_suite(tr, p, s))


# ------------------------------------------------------------- pointwise

def test_grad_bound_equality_for_isotropic():
    p = make_quadratic(3, 2, [[1, 0, 2], [-1, 0, -2]], [2.0, 2.0, 2.0])
    pts = np.random.default_rng(0).standard_normal((50, 3))
    rep = verify_component_grad_bound(p, pts)
    assert rep.status == "pass"
    assert max(abs(c.slack) for c in rep.checks) <= 1e-12 * max(c.rhs for c in rep.checks)


def test_grad_bound_zero_at_component_minimizer():
    p = make_quadratic(2, 1, [[0.5, -0.5]], [1.0, 2.0])
    c = verify_component_grad_bound(p, [[0.5, -0.5]]).checks[0]
    assert c.lhs == 0.0 and c.rhs == 0.0 and c.ok


def test_grad_bound_understated_L():
    p = make_quadratic(2, 1, [[0, 0]], [1.0, 3.0])
    object.__setattr__(p, "lipschitz", 1.0)
    assert verify_component_grad_bound(p, [[0.0, 1.0]]).status == "fail"


def test_kl_equality_identity_quadratic():
    p = make_quadratic(2, 1, [[0, 0]], [1.0, 1.0])
    kl = KLDescriptor(0.5, math.sqrt(2), math.inf, 0.0)
    pts = np.random.default_rng(1).standard_normal((100, 2))
    rep = kl_inequality_check(p, kl, pts)
    assert rep.status == "pass"
    assert max(abs(c.slack) for c in rep.checks) < 1e-14


def _radial(theta):
    p = make_quadratic(2, 1, [[0, 0]], [1.0, 1.0])
    kl = KLDescriptor(theta, math.sqrt(2), math.inf, 0.0)
    pts = np.array([[r, 0.0] for r in 10.0 ** -np.arange(0, 8, dtype=float)])
    return kl_inequality_check(p, kl, pts)


def test_kl_wrong_theta_is_flagged():
    # (r^2/2)^theta against sqrt(2) (1 - theta) r: a too large theta
    # fails away from x*, a too small one fails as x -> x*
    big = _radial(0.9)
    assert big.status == "fail" and not big.checks[0].ok and big.checks[-1].ok
    small = _radial(0.3)
    assert small.status == "fail" and small.checks[0].ok and not small.checks[-1].ok


def test_kl_no_admissible_points_is_vacuous():
    p = make_quadratic(1, 1, [[0.0]], [1.0])
    kl = KLDescriptor(0.5, 2.0, 0.01, 0.0)
    rep = kl_inequality_check(p, kl, [[0.0], [5.0]])
    assert rep.status == "vacuous" and rep.note


# ------------------------------------------------------------------ output

def test_csv_output(tmp_path, quad_run):
    p, s, tr = quad_run
    rep = verify_epoch_recursion(tr, p, s)
    path = tmp_path / "rec.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "check,epoch,lhs,rhs,slack,status"
    assert len(lines) == 201
    assert lines[1].endswith(",pass")
    assert rep.summary().startswith("PASS")


# ------------------------------------------------------------ recursion oracle

def test_polyak_mode_a(backend):
    r = polyak_recursion_oracle(q=2, d=1, mode="A", p=1, b=0, z1=1.0, K=10 ** 5)
    assert r.predicted == 1.0
    assert abs(r.limit_estimate - 1) <= 0.05
    assert len(r.z) == 10 ** 5 and r.z[0] == 1.0


def test_polyak_mode_b(backend):
    r = polyak_recursion_oracle(q=1, d=1, mode="B", s=0.5, tau=1.5, z1=1.0, K=10 ** 5)
    assert abs(r.limit_estimate - 1) <= 0.10


def test_polyak_first_steps_by_hand():
    r = polyak_recursion_oracle(q=2, d=1, mode="A", p=1, b=1, z1=1.0, K=3)
    z2 = (1 - 2 / 2) * 1.0 + 1 / 2 ** 2
    z3 = (1 - 2 / 3) * z2 + 1 / 3 ** 2
    assert r.z == pytest.approx([1.0, z2, z3])


def test_polyak_zero_forcing(backend):
    r = polyak_recursion_oracle(q=1, d=0, mode="B", s=0.5, tau=1.5, K=10 ** 4)
    k = np.arange(1, 10 ** 4 + 1)
    for power in (1, 2, 5):
        assert r.z[-1] * k[-1] ** power < 1e-12


@pytest.mark.parametrize("kw", [
    dict(q=1, d=1, mode="A", p=1), dict(q=2, d=1, mode="A"), dict(q=2, d=-1, mode="A", p=1),
    dict(q=1, d=1, mode="B", s=1.0, tau=1.5), dict(q=1, d=1, mode="B", s=0.5, tau=0.5),
    dict(q=1, d=1, mode="C"),
])
def test_polyak_windows(kw):
    with pytest.raises(InvalidParameterError):
        polyak_recursion_oracle(**kw)
