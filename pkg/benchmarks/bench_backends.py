"""Wall-clock comparison of the numba kernels against the numpy fallback.

    python benchmarks/bench_backends.py --epochs 2000 --repeat 3

Each timing is the best of ``--repeat`` runs after one warm-up call, so JIT
compilation is excluded.  The last column checks the two backends agree.
"""
import argparse
import os
import time

import numpy as np

from reshuffle import PermutationSource, StepSchedule, admissible_bound, make_problem, run
from reshuffle.permutations import uniform_permutations
from reshuffle.verify import polyak_recursion_oracle


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def with_backend(name, fn, repeat):
    old = os.environ.get("RESHUFFLE_BACKEND")
    os.environ["RESHUFFLE_BACKEND"] = name
    try:
        return best_of(fn, repeat)
    finally:
        if old is None:
            del os.environ["RESHUFFLE_BACKEND"]
        else:
            os.environ["RESHUFFLE_BACKEND"] = old


def cases(epochs):
    for name in ("quadratic", "power", "double_well"):
        p = make_problem(name)
        s = StepSchedule(admissible_bound(p.lipschitz, p.N), 0.0, 0.75)
        for variant in ("rr", "sppm"):
            yield (f"run {name}/{variant}",
                   lambda p=p, s=s, v=variant: run(p, np.full(p.n, 0.5), s, epochs,
                                                   PermutationSource.uniform(1), v).outer)
    yield ("permutations N=64", lambda: uniform_permutations(7, 1, epochs, 64))
    yield ("polyak mode B", lambda: polyak_recursion_oracle(1, 1, "B", s=0.5, tau=1.5,
                                                            K=100 * epochs).z)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"{'case':28s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  agree")
    for label, fn in cases(args.epochs):
        tn, a = with_backend("numba", fn, args.repeat)
        tp, b = with_backend("numpy", fn, args.repeat)
        agree = np.allclose(a, b, rtol=1e-12, atol=1e-14)
        print(f"{label:28s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}  {agree}")


if __name__ == "__main__":
    main()
