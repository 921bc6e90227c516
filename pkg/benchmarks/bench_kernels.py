"""Compare the compiled and pure-Python kernels.

Run ``python benchmarks/bench_kernels.py`` after building the extension
(``pip install --no-build-isolation -e .``).  Both backends are timed on
a Sylvester sweep over quasi-triangular pairs and on the step recurrence
used by the simulator.
"""
import argparse
import sys
import timeit

import numpy as np
import scipy.linalg

from geozero import kernels


def quasi_triangular_pair(n, rng):
    R = scipy.linalg.schur(rng.standard_normal((n, n)) - 3 * np.eye(n))[0]
    S = scipy.linalg.schur(rng.standard_normal((n, n)) + 3 * np.eye(n))[0]
    return R, S, rng.standard_normal((n, n))


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    parser.add_argument("--steps", type=int, nargs="+", default=[1000, 10000, 100000])
    args = parser.parse_args(argv)

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    else:
        print("compiled extension not available; timing the Python backend only", file=sys.stderr)

    rng = np.random.default_rng(0)
    header = f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for n in args.sizes:
        R, S, C = quasi_triangular_pair(n, rng)
        times = {name: best_of(lambda b=b: b.sylvester_quasi_triangular(R, S, C), args.repeat)
                 for name, b in backends.items()}
        _report(f"sylvester n={n}", times)

    sys_n, p = 8, 3
    Phi = scipy.linalg.expm(1e-3 * (rng.standard_normal((sys_n, sys_n)) - 4 * np.eye(sys_n)))
    gamma = 1e-3 * rng.standard_normal(sys_n)
    C = rng.standard_normal((p, sys_n))
    d = np.zeros(p)
    for steps in args.steps:
        times = {name: best_of(lambda b=b: b.lti_step_recurrence(Phi, gamma, C, d, steps, 1e12), args.repeat)
                 for name, b in backends.items()}
        _report(f"step recurrence n={sys_n} k={steps}", times)


def _report(label, times):
    row = f"{label:<28}" + "".join(f"{t * 1e6:>11.1f} us" for t in times.values())
    if "compiled" in times:
        row += f"{times['python'] / times['compiled']:>9.1f}x"
    print(row)


if __name__ == "__main__":
    main()
