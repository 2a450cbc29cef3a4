"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and problem size with the best-of-repeat time of
each backend and the speed-up. Outputs of the two backends are compared
before timing.
"""
import argparse
import timeit

import numpy as np

from rbmflock import _backend
from rbmflock.cleanliness import trial_permutations
from rbmflock.kernels import KernelSpec
from rbmflock.particles import partition_from_permutation


def rhs_case(n_batches, p, d, rng):
    X = rng.normal(size=(n_batches, p, d))
    V = rng.normal(size=(n_batches, p, d))
    args = KernelSpec("inverse-power", gamma_base=0.5).kernel_args()
    return lambda be: be.velocity_rhs(X, V, *args, 1.0 / (p - 1))


def diameter_case(n, d, rng):
    P = rng.normal(size=(n, d))
    return lambda be: be.max_pairwise_distance(P)


def clean_case(n, p, k, trials):
    perms = trial_permutations(n, k, trials, seed=0, chunk_index=0)
    perms = np.ascontiguousarray(partition_from_permutation(perms, p).reshape(perms.shape))
    return lambda be: be.clean_trials(perms, p)


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if "cython" not in _backend.available():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    py, cy = _backend.get("python"), _backend.get("cython")
    rng = np.random.default_rng(0)
    cases = [
        ("velocity_rhs full N=1024 d=2", rhs_case(1, 1024, 2, rng)),
        ("velocity_rhs batches N=10^4 p=2 d=1", rhs_case(5000, 2, 1, rng)),
        ("velocity_rhs batches N=10^4 p=16 d=2", rhs_case(625, 16, 2, rng)),
        ("max_pairwise_distance N=4096 d=2", diameter_case(4096, 2, rng)),
        ("clean_trials N=256 k=3 trials=10^4", clean_case(256, 2, 3, 10_000)),
    ]
    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases:
        assert _same(fn(py), fn(cy)), name
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        print(f"{name:40s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:9.1f}")


if __name__ == "__main__":
    main()
