"""Compare the compiled kernels with their pure-Python fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--n 200] [--repeat 3]

Times the all-pairs biographical similarity matrix (probe versus gallery
names) and one logistic fit of the size used per ensemble member, and checks
that both backends return the same numbers.
"""

import argparse
import time

import numpy as np

from adaptfuse import _pykernels, datagen

try:
    from adaptfuse import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def similarity_case(n, seed):
    subjects = datagen.sample_subjects(n, datagen.default_tables(), seed)
    probes = [s.probe_bio["name"] for s in subjects]
    gallery = [s.gallery_bio["name"] for s in subjects]
    return lambda impl: impl.similarity_matrices(probes, gallery)


def descent_case(rows, k, seed):
    rng = np.random.default_rng(seed)
    x = np.hstack([np.ones((rows, 1)), rng.normal(size=(rows, k))])
    y = (rng.random(rows) < 1 / (1 + np.exp(-(x[:, 1] * 3 - 2)))).astype(float)
    w = np.full(rows, 1.0 / rows)
    return lambda impl: impl.gradient_descent(x, y, w, np.zeros(k + 1), 0.1, 10_000, 1e-8, 0.0, 10, 1.1, 0.25)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200, help="probes and gallery entries for the matrix")
    parser.add_argument("--rows", type=int, default=666, help="training rows for the logistic fit")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
    cases = [
        (f"similarity {args.n}x{args.n}", similarity_case(args.n, args.seed)),
        (f"gradient descent {args.rows}x5", descent_case(args.rows, 5, args.seed)),
    ]
    print(f"{'kernel':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, case in cases:
        t_py, out_py = best_of(lambda: case(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<28}{t_py:>12.4f}{'-':>12}{'-':>10}")
            continue
        t_c, out_c = best_of(lambda: case(_ckernels), args.repeat)
        np.testing.assert_allclose(np.asarray(out_py[0]), np.asarray(out_c[0]), rtol=1e-9, atol=1e-12)
        print(f"{name:<28}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
