"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two direct integrations on both backends and the fused
estimator loop against the generic one, then prints a table with
speedups.  Run from the repository root:

    python3 benchmarks/bench_kernels.py --orbits 100 --repeats 3
"""

import argparse
import time

import numpy as np

from polarj2 import averaging, j2problem, runner
from polarj2._kernels import pure

try:
    from polarj2._kernels import _speed
except ImportError:
    _speed = None

POLAR = dict(p0=3.000, e0=0.6640, y0=0.0000, epsilon=5.457e-4)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_direct(orbits, repeats):
    rows = []
    args = (POLAR["p0"], POLAR["e0"], POLAR["y0"], POLAR["epsilon"], orbits)
    for label, fn in (("error system L", "integrate_l"),
                      ("element system", "integrate_elements")):
        t_pure = best_of(lambda: getattr(pure, fn)(*args), repeats)
        if _speed is not None:
            t_fast = best_of(lambda: getattr(_speed, fn)(*args), repeats)
        else:
            t_fast = float("nan")
        rows.append((label, t_pure, t_fast))
    return rows


def bench_estimator(orbits, repeats):
    config = j2problem.J2Config.from_orbits(orbits=orbits, **POLAR)
    system = j2problem.make_system(config)
    j_curve = averaging.averaged_solution(system, config.i0, config.u)
    r_eval, _ = averaging.fundamental_matrices(system, j_curve, config.u)
    k_eval = averaging.particular_k(system, j_curve, r_eval, config.u)
    a0 = averaging.a0_build(system, j_curve, r_eval, k_eval,
                            config.theta_grid, config.tau_grid, config.u,
                            mode=config.interp_mode, refine=True)
    fp = averaging.fixed_point(a0, system.bounds, config.epsilon,
                               system.caps(0.0))
    t_pure = best_of(
        lambda: runner._estimator_generic(config, system, a0, fp), repeats)
    if _speed is not None:
        t_fast = best_of(
            lambda: runner._estimator_compiled(config, system, a0, fp),
            repeats)
    else:
        t_fast = float("nan")
    return [("envelope estimator", t_pure, t_fast)]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--orbits", type=float, default=100.0)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _speed is None:
        print("compiled extension not importable; timing the fallback only")
    rows = bench_direct(args.orbits, args.repeats)
    rows += bench_estimator(args.orbits, args.repeats)

    width = max(len(r[0]) for r in rows)
    print("%-*s  %12s  %12s  %9s" % (width, "kernel", "pure [s]",
                                     "compiled [s]", "speedup"))
    for label, t_pure, t_fast in rows:
        if np.isnan(t_fast):
            print("%-*s  %12.6f  %12s  %9s" % (width, label, t_pure,
                                               "n/a", "n/a"))
        else:
            print("%-*s  %12.6f  %12.6f  %8.1fx" % (width, label, t_pure,
                                                    t_fast, t_pure / t_fast))


if __name__ == "__main__":
    main()
