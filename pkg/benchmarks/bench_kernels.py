"""Compare the numba and pure-numpy eigen/Cholesky kernels.

Usage::

    python benchmarks/bench_kernels.py [--n 200] [--dims 4 8 16 32] [--repeat 3]

Both backends are imported directly, so the ``SPDFLOW_NUMBA`` flag does not
matter here. Compilation happens in a warm-up call that is not timed.
"""

import argparse
from timeit import default_timer as timer

import numpy as np

from spdflow import kernels


def random_spd(n, d, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d, d))
    return a @ np.swapaxes(a, 1, 2) / d + np.eye(d)


def best_of(fn, arg, repeat):
    times = []
    for _ in range(repeat):
        start = timer()
        fn(arg)
        times.append(timer() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200, help="matrices per batch")
    parser.add_argument("--dims", type=int, nargs="+", default=[4, 8, 16, 32])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if not kernels.NUMBA_AVAILABLE:
        print("numba is not importable; only the numpy backend can run")
        return

    cases = [
        ("eigh", kernels.jacobi_eigh_numpy, kernels.jacobi_eigh_numba),
        ("cholesky", kernels.cholesky_numpy, kernels.cholesky_numba),
    ]
    print(f"{'kernel':<10}{'d':>4}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>12}")
    for name, np_fn, nb_fn in cases:
        for d in args.dims:
            mats = random_spd(args.n, d)
            nb_fn(mats[:2])  # compile
            t_np = best_of(np_fn, mats, args.repeat)
            t_nb = best_of(nb_fn, mats, args.repeat)
            diff = max(np.max(np.abs(a - b)) for a, b in zip(np_fn(mats)[:1], nb_fn(mats)[:1]))
            print(f"{name:<10}{d:>4}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
