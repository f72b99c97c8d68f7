"""Command-line front end: ``reshuffle {run,verify,rates,list-problems}``.

Configs are flat ``key = value`` files with dotted keys::

    problem.name = quadratic
    problem.n = 10
    variant = rr
    schedule.alpha = admissible     # number, "admissible" or "kl"
    schedule.gamma = 1
    run.epochs = 10000
    run.seeds = 1, 2, 3

Exit codes: 0 success, 1 failed checks or rates, 2 bad configuration or
input files, 3 numerical failure.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import math
import os
import sys

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, InvalidParameterError, NumericalFailure
from .optim import Trajectory, VARIANTS, run
from .permutations import PermutationSource
from .problems import BUILTIN, make_problem, problem_defaults
from .rates import choose_reference, estimate_rate, psi_boundary, psi_proviso, psi_rate
from .schedules import StepSchedule, admissible_bound, check_conditions, first_valid_iteration
from .verify import DEFAULT_TOL, format_float, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_SIMPLE_KEYS = {
    "variant": str,
    "schedule.alpha": str, "schedule.alpha_factor": float,
    "schedule.beta": float, "schedule.gamma": float,
    "run.epochs": int, "run.seed": int, "run.seeds": "ints",
    "run.record_inner": bool, "run.x0": "floats", "run.reference": str,
    "verify.trajectory": str, "verify.tolerance": float,
    "sweep.problems": "strs", "sweep.gammas": "floats", "sweep.seeds": "ints",
    "sweep.variant": str, "sweep.epochs": int, "sweep.window": float,
    "sweep.margin": float, "sweep.grid_points": int,
}


@dataclass
class RunConfig:
    problem: str = "quadratic"
    params: dict = field(default_factory=dict)
    variant: str = "rr"
    alpha: str = "admissible"
    alpha_factor: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0
    epochs: int = 1000
    seeds: list = field(default_factory=lambda: [1])
    record_inner: bool = False
    x0: list = None
    reference: str = None
    trajectory: str = None
    tolerance: float = DEFAULT_TOL
    sweep_problems: list = None
    sweep_params: dict = field(default_factory=dict)
    sweep_gammas: list = None
    sweep_seeds: list = None
    sweep_variant: str = None
    sweep_epochs: int = None
    window: float = 0.5
    margin: float = 0.15
    grid_points: int = 100


def _convert(kind, raw):
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if kind is str:
        return raw
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    if kind == "ints":
        return [int(s) for s in items]
    if kind == "floats":
        return [float(s) for s in items]
    if kind == "strs":
        return items
    raise AssertionError(kind)


def _convert_param(problem, key, raw):
    defaults = problem_defaults(problem)
    if key not in defaults:
        raise ValueError(f"unknown parameter {key!r} for problem {problem!r}; "
                         f"known: {', '.join(sorted(defaults))}")
    return int(raw) if isinstance(defaults[key], int) else float(raw)


def parse_config(text):
    """Parse config text into a :class:`RunConfig`; errors carry line numbers."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigurationError("empty key or value", lineno)
        if key in entries:
            raise ConfigurationError(f"duplicate key {key!r}", lineno)
        entries[key] = (value, lineno)

    cfg = RunConfig()
    if "problem.name" in entries:
        cfg.problem, lineno = entries.pop("problem.name")
        if cfg.problem not in BUILTIN:
            raise ConfigurationError(f"unknown problem {cfg.problem!r}", lineno)
    for key, (value, lineno) in sorted(entries.items(), key=lambda kv: kv[1][1]):
        try:
            if key.startswith("problem."):
                name = key[len("problem."):]
                cfg.params[name] = _convert_param(cfg.problem, name, value)
            elif key.startswith("sweep.") and key not in _SIMPLE_KEYS:
                parts = key.split(".")
                if len(parts) != 3 or parts[1] not in BUILTIN:
                    raise ValueError(f"unknown key {key!r}")
                cfg.sweep_params.setdefault(parts[1], {})[parts[2]] = \
                    _convert_param(parts[1], parts[2], value)
            elif key in _SIMPLE_KEYS:
                _assign(cfg, key, _convert(_SIMPLE_KEYS[key], value))
            else:
                raise ValueError(f"unknown key {key!r}")
        except ConfigurationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(str(exc), lineno) from None

    if cfg.variant == "ig":
        for key in ("run.seed", "run.seeds"):
            if key in entries:
                raise ConfigurationError("variant ig uses the identity order and takes no seed",
                                         entries[key][1])
        cfg.seeds = [None]
    return cfg


def _assign(cfg, key, value):
    if key == "variant" or key == "sweep.variant":
        value = value.lower()
        if value not in VARIANTS:
            raise ValueError(f"variant must be one of {', '.join(VARIANTS)}")
    if key in ("run.epochs", "sweep.epochs") and value < 1:
        raise ValueError("epochs must be >= 1")
    if key == "schedule.alpha" and value not in ("admissible", "kl"):
        v = float(value)
        if not v > 0:
            raise ValueError("alpha must be positive")
    if key == "run.seed":
        key, value = "run.seeds", [value]
    if key in ("run.seeds", "sweep.seeds") and any(not 0 <= s < 2 ** 64 for s in value):
        raise ValueError("seeds must be unsigned 64-bit integers")
    attr = {
        "variant": "variant", "schedule.alpha": "alpha",
        "schedule.alpha_factor": "alpha_factor", "schedule.beta": "beta",
        "schedule.gamma": "gamma", "run.epochs": "epochs", "run.seeds": "seeds",
        "run.record_inner": "record_inner", "run.x0": "x0",
        "run.reference": "reference", "verify.trajectory": "trajectory",
        "verify.tolerance": "tolerance", "sweep.problems": "sweep_problems",
        "sweep.gammas": "sweep_gammas", "sweep.seeds": "sweep_seeds",
        "sweep.variant": "sweep_variant", "sweep.epochs": "sweep_epochs",
        "sweep.window": "window", "sweep.margin": "margin",
        "sweep.grid_points": "grid_points",
    }[key]
    setattr(cfg, attr, value)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def resolve_alpha(cfg, problem):
    """Numeric alpha, 1/(sqrt(2) L N) for 'admissible', 2 c^2 / N for 'kl'; symbolic forms are scaled by alpha_factor."""
    if cfg.alpha == "admissible":
        base = admissible_bound(problem.lipschitz, problem.N)
    elif cfg.alpha == "kl":
        if problem.kl is None:
            raise ConfigurationError("schedule.alpha = kl needs a problem with a KL descriptor")
        base = 2 * problem.kl.c ** 2 / problem.N
    else:
        return float(cfg.alpha)
    return cfg.alpha_factor * base


def _build(name, params):
    try:
        return make_problem(name, **params)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigurationError(f"cannot build problem {name!r}: {exc}") from None


def _x0(cfg, problem):
    if cfg.x0 is None:
        return np.full(problem.n, 0.5)
    if len(cfg.x0) == 1:
        return np.full(problem.n, cfg.x0[0])
    if len(cfg.x0) != problem.n:
        raise ConfigurationError(f"run.x0 has {len(cfg.x0)} entries, problem has n={problem.n}")
    return np.array(cfg.x0)


def _reference(cfg, problem):
    if cfg.reference is None or cfg.reference == "none":
        return None
    if cfg.reference == "minimizer":
        if problem.minimizer is None:
            raise ConfigurationError("problem has no known minimizer")
        return np.asarray(problem.minimizer, dtype=float)
    try:
        ref = np.array([float(s) for s in cfg.reference.split(",")])
    except ValueError:
        raise ConfigurationError(f"bad run.reference {cfg.reference!r}") from None
    if ref.size != problem.n:
        raise ConfigurationError(f"run.reference has {ref.size} entries, problem has n={problem.n}")
    return ref


def _source(variant, seed):
    return PermutationSource.identity() if variant == "ig" else PermutationSource.uniform(seed)


def _stem(problem, variant, seed):
    return f"{problem}_{variant}" + ("" if seed is None else f"_seed{seed}")


# ------------------------------------------------------------------ file I/O

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) for v in row])


def write_trajectory(out_dir, stem, traj, problem_params, reference=None):
    """Write <stem>.csv, <stem>.iterates.csv and <stem>.meta.json."""
    header = ["t", "alpha_t", "f", "grad_norm"] + (["dist_to_ref"] if reference is not None else [])
    rows = []
    for t in range(len(traj.outer)):
        row = [t, traj.steps[t - 1] if t > 0 else "", traj.values[t], traj.grad_norms[t]]
        if reference is not None:
            row.append(float(np.linalg.norm(traj.outer[t] - reference)))
        rows.append(row)
    base = os.path.join(out_dir, stem)
    _write_csv(base + ".csv", header, rows)
    n = traj.outer.shape[1]
    _write_csv(base + ".iterates.csv", ["t"] + [f"x_{j + 1}" for j in range(n)],
               ([t] + list(map(float, x)) for t, x in enumerate(traj.outer)))
    meta = dict(traj.meta)
    meta["params"] = problem_params
    meta["completed_epochs"] = traj.epochs
    with open(base + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_numeric_csv(path, ncols=None):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigurationError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    width = len(header)
    data = []
    for k, row in enumerate(body, 2):
        if len(row) != width:
            raise ConfigurationError(f"{path}: expected {width} fields", k)
        try:
            data.append([float(v) if v != "" else math.nan for v in row])
        except ValueError:
            raise ConfigurationError(f"{path}: non-numeric field", k) from None
    return header, np.array(data, dtype=float).reshape(len(data), width)


def load_trajectory(path):
    """Inverse of :func:`write_trajectory`; returns (problem, schedule, trajectory)."""
    if not path.endswith(".csv"):
        raise ConfigurationError(f"trajectory file must end in .csv: {path}")
    base = path[:-len(".csv")]
    try:
        with open(base + ".meta.json") as fh:
            meta = json.load(fh)
        problem = _build(meta["problem"], meta["params"])
        sched = StepSchedule(**meta["schedule"])
        variant = meta["variant"]
    except OSError as exc:
        raise ConfigurationError(f"cannot read metadata: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed metadata for {path}: {exc}") from None
    header, table = _read_numeric_csv(path)
    if header[:4] != ["t", "alpha_t", "f", "grad_norm"]:
        raise ConfigurationError(f"{path}: unexpected header {header}", 1)
    _, iterates = _read_numeric_csv(base + ".iterates.csv")
    if iterates.shape[1] != problem.n + 1 or len(iterates) != len(table):
        raise ConfigurationError(f"{path}: iterates do not match the trajectory table")
    T = len(table) - 1
    if T < 1 or not np.array_equal(table[:, 0], np.arange(T + 1)):
        raise ConfigurationError(f"{path}: t column must run 0..T")
    for arr in (table[:, 2:4], iterates[:, 1:], table[1:, 1]):
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError(f"{path}: non-finite entries")
    traj = Trajectory(outer=iterates[:, 1:], values=table[:, 2], grad_norms=table[:, 3],
                      steps=table[1:, 1], perms=np.empty((T, 0), dtype=np.int64),
                      inner=None, meta=meta)
    if not np.allclose(traj.steps, sched.steps(T), rtol=1e-12, atol=0):
        raise ConfigurationError(f"{path}: alpha_t column disagrees with the stored schedule")
    return problem, sched, traj


# ---------------------------------------------------------------- commands

def _fan_out(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _setup(cfg):
    problem = _build(cfg.problem, cfg.params)
    return problem, StepSchedule(resolve_alpha(cfg, problem), cfg.beta, cfg.gamma)


def _run_one(job):
    # returns only picklable pieces; problems hold closures
    cfg, seed, record_inner = job
    problem, sched = _setup(cfg)
    try:
        traj = run(problem, _x0(cfg, problem), sched, cfg.epochs, _source(cfg.variant, seed),
                   cfg.variant, record_inner=record_inner)
        failure = None
    except NumericalFailure as exc:
        traj, failure = exc.trajectory, str(exc)
    conds = check_conditions(sched, problem.kl.theta if problem.kl else None)
    traj.meta["conditions"] = conds._asdict()
    traj.meta["first_valid_iteration"] = first_valid_iteration(sched, problem.lipschitz, problem.N)
    return _stem(cfg.problem, cfg.variant, seed), traj, failure


def cmd_run(cfg, out_dir, workers=1):
    problem, _ = _setup(cfg)
    reference = _reference(cfg, problem)
    status = EXIT_OK
    for stem, traj, failure in _fan_out(_run_one, [(cfg, s, cfg.record_inner) for s in cfg.seeds],
                                        workers):
        write_trajectory(out_dir, stem, traj, cfg.params, reference)
        if failure:
            print(f"{stem}: numerical failure: {failure}", file=sys.stderr)
            status = EXIT_NUMERIC
        else:
            print(f"{stem}: {traj.epochs} epochs, f = {traj.values[-1]:.6g}, "
                  f"|grad f| = {traj.grad_norms[-1]:.3g}")
    return status


def _write_reports(out_dir, stem, reports):
    rows = [row for r in reports for row in r.rows()]
    _write_csv(os.path.join(out_dir, f"verify_{stem}.csv"),
               ["check", "epoch", "lhs", "rhs", "slack", "status"], rows)
    return [[stem, r.name, r.status, len(r.checks), len(r.failures), r.max_violation,
             len(r.inadmissible)] for r in reports]


def cmd_verify(cfg, out_dir, workers=1):
    results = []
    if cfg.trajectory:
        problem, sched, traj = load_trajectory(cfg.trajectory)
        stem = os.path.basename(cfg.trajectory)[:-len(".csv")]
        results.append((stem, problem, sched, traj, None))
    else:
        problem, sched = _setup(cfg)
        runs = _fan_out(_run_one, [(cfg, s, True) for s in cfg.seeds], workers)
        results = [(stem, problem, sched, traj, failure) for stem, traj, failure in runs]

    summary, ok, numeric = [], True, False
    for stem, problem, sched, traj, failure in results:
        if failure:
            print(f"{stem}: numerical failure: {failure}", file=sys.stderr)
            numeric = True
            continue
        conds = check_conditions(sched, problem.kl.theta if problem.kl else None)
        print(f"{stem}: conditions {dict(conds._asdict())}")
        reports = run_suite(traj, problem, sched, traj.meta.get("variant"), tol=cfg.tolerance)
        for r in reports:
            print(f"  {r.summary()}")
            ok &= r.passed
        summary += _write_reports(out_dir, stem, reports)
    _write_csv(os.path.join(out_dir, "verify_summary.csv"),
               ["run", "check", "status", "checks", "violations", "max_violation",
                "inadmissible"], summary)
    if numeric:
        return EXIT_NUMERIC
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


SWEEP_HEADER = ["problem", "variant", "seed", "alpha", "beta", "gamma", "theta",
                "psi_theoretical", "fitted", "residual", "window_lo", "window_hi"]


def _sweep_one(job):
    cfg, name, gamma, seed = job
    params = cfg.sweep_params.get(name, {})
    problem = _build(name, params)
    variant = cfg.sweep_variant or cfg.variant
    sched = StepSchedule(resolve_alpha(cfg, problem), cfg.beta, gamma)
    epochs = cfg.sweep_epochs or cfg.epochs
    x0 = _x0(cfg, problem)
    src = _source(variant, seed)
    try:
        traj = run(problem, x0, sched, epochs, src, variant)
        ref = choose_reference(problem, traj,
                               lambda: run(problem, x0, sched, 10 * epochs, src, variant))
    except NumericalFailure as exc:
        return None, False, str(exc)
    theta = problem.kl.theta if problem.kl else None
    in_window = theta is not None and 0.5 < gamma <= 1.0
    try:
        rep = estimate_rate(traj, ref, cfg.window, theta=theta if in_window else None,
                            gamma=gamma)
        fitted, resid, lo, hi = rep.fitted_exponent, rep.residual, *rep.fit_window
    except InsufficientDataError:
        rep, fitted, resid, lo, hi = None, math.nan, math.nan, "", ""
    psi = psi_rate(theta, gamma) if in_window else ""
    # the (1/2, 1) value needs alpha > 2 c^2 / N; below that there is no claim to compare
    compared = in_window and (not psi_proviso(theta, gamma)
                              or sched.alpha > 2 * problem.kl.c ** 2 / problem.N)
    row = [name, variant, "" if seed is None else seed, sched.alpha, sched.beta, gamma,
           "" if theta is None else theta, psi, fitted, resid, lo, hi]
    return row, compared, None


def psi_grid_rows(points):
    thetas = np.arange(points) / points
    gammas = 0.5 + 0.5 * np.arange(1, points + 1) / points
    for th in thetas:
        for g in gammas:
            branch = "proviso" if psi_proviso(th, g) else (1 if th < psi_boundary(g) else 2)
            yield [float(th), float(g), psi_rate(th, g), branch]


def cmd_rates(cfg, out_dir, workers=1):
    problems = sorted(cfg.sweep_problems or [cfg.problem])
    for name in problems:
        if name not in BUILTIN:
            raise ConfigurationError(f"unknown problem {name!r} in sweep.problems")
    gammas = sorted(cfg.sweep_gammas or [cfg.gamma])
    variant = cfg.sweep_variant or cfg.variant
    seeds = [None] if variant == "ig" else sorted(cfg.sweep_seeds or cfg.seeds)
    jobs = [(cfg, p, g, s) for p in problems for g in gammas for s in seeds]
    results = _fan_out(_sweep_one, jobs, workers)

    rows, status = [], EXIT_OK
    for (_, name, gamma, seed), (row, compared, failure) in zip(jobs, results):
        if failure:
            print(f"{name} gamma={gamma} seed={seed}: numerical failure: {failure}",
                  file=sys.stderr)
            status = EXIT_NUMERIC
            continue
        rows.append(row)
        psi, fitted = row[7], row[8]
        verdict = ""
        if psi != "" and not compared:
            verdict = "(alpha <= 2c^2/N, not compared)"
        elif psi != "":
            good = fitted >= psi - cfg.margin
            verdict = "ok" if good else "BELOW"
            if not good and status == EXIT_OK:
                status = EXIT_FAIL
        print(f"{name} {variant} gamma={gamma:g} seed={seed}: fitted {fitted:.4f}"
              + (f" vs psi {psi:.4f} {verdict}" if psi != "" else ""))
    _write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows)
    _write_csv(os.path.join(out_dir, "psi_grid.csv"), ["theta", "gamma", "psi", "branch"],
               psi_grid_rows(cfg.grid_points))
    return status


def cmd_list_problems():
    for name in sorted(BUILTIN):
        defaults = ", ".join(f"{k}={v}" for k, v in problem_defaults(name).items())
        print(f"{name}: {BUILTIN[name][1]}\n    defaults: {defaults}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="reshuffle", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the optimizer and write trajectories"),
                           ("verify", "check the per-epoch inequalities"),
                           ("rates", "fit convergence exponents over a sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace every configured seed with this one")
    sub.add_parser("list-problems", help="show the built-in problems")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-problems":
        return cmd_list_problems()
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            if cfg.variant == "ig":
                raise ConfigurationError("variant ig takes no seed")
            cfg.seeds = [args.seed_override]
            if cfg.sweep_seeds:
                cfg.sweep_seeds = [args.seed_override]
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        os.makedirs(args.out, exist_ok=True)
        command = {"run": cmd_run, "verify": cmd_verify, "rates": cmd_rates}[args.command]
        return command(cfg, args.out, args.jobs)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
