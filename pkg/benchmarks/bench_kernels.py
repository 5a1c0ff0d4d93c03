"""Compare the numba and numpy kernels on KL bounds and coverage counting.

    python benchmarks/bench_kernels.py --paths 20000 --k-max 400 --repeat 3
"""

import argparse
import math
import timeit

import numpy as np

from synthcal import _kernels as K


def make_inputs(paths, k_max, seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 0.95, paths)
    mu = np.clip(p + rng.normal(0.0, 0.05, paths), 0.01, 0.99)
    prefix = np.cumsum(rng.random((paths, k_max)) < p[:, None], axis=1, dtype=np.int64)
    ybar = rng.random(paths * 10)
    thr = rng.uniform(1e-3, 2.0, ybar.size)
    return prefix, mu, ybar, thr


def bench(label, fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"  {label:<28s} {best * 1e3:10.1f} ms")
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=20_000)
    parser.add_argument("--k-max", type=int, default=400)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    prefix, mu, ybar, thr = make_inputs(args.paths, args.k_max, args.seed)
    print(f"paths={args.paths} k_max={args.k_max} numba={'yes' if K.HAVE_NUMBA else 'no'}")
    cases = {
        "kl_bounds": lambda impl: (lambda: impl(ybar, thr)),
        "coverage clt": lambda impl: (lambda: impl(prefix, mu, 2.0, 1.6448536269514722, K.CLT)),
        "coverage kl": lambda impl: (lambda: impl(prefix, mu, 2.0, math.log(20.0), K.KL)),
        "coverage bernstein": lambda impl: (lambda: impl(prefix, mu, 2.0, math.log(40.0), K.BERNSTEIN)),
    }
    for name, make in cases.items():
        print(name)
        numpy_impl = K.kl_bounds_numpy if name == "kl_bounds" else K.coverage_counts_numpy
        t_np = bench("numpy", make(numpy_impl), args.repeat)
        if K.HAVE_NUMBA:
            numba_impl = K.kl_bounds_numba if name == "kl_bounds" else K.coverage_counts_numba
            t_nb = bench("numba", make(numba_impl), args.repeat)
            print(f"  {'speed-up':<28s} {t_np / t_nb:10.1f} x")


if __name__ == "__main__":
    main()
