"""Time the numba and numpy kernel backends on study-sized inputs.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Numba timings exclude the first (compiling) call.
"""
import argparse
import time

import numpy as np

from recdir import _backend
from recdir.kernels import (
    ar2_filter_numba,
    ar2_filter_numpy,
    mlp_train_numba,
    mlp_train_numpy,
    quad_project_numba,
    quad_project_numpy,
)
from recdir.kernels.mlp import DIRECT, RECURSIVE
from recdir.taskspace import lm_starts, recursive_map_arrays


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(12_500)  # one sweep trial: n_train + burn-in
    yield "ar2_filter (n=12500)", lambda f: f(w, 0.5, 0.2), ar2_filter_numba, ar2_filter_numpy

    coef, exps, nterms = recursive_map_arrays()
    starts = lm_starts(16, 1)
    t = rng.uniform(-2, 2, 5)
    R = np.eye(5)
    yield "quad_project (16 starts)", lambda f: f(starts, coef, exps, nterms, R, t), \
        quad_project_numba, quad_project_numpy

    X, Y = rng.standard_normal((4096, 50)), rng.standard_normal((4096, 2))
    perms = np.stack([rng.permutation(4096) for _ in range(5)])
    for name, strategy, n_out in (("direct", DIRECT, 2), ("recursive", RECURSIVE, 1)):
        params = (rng.standard_normal((2, 50)) * 0.1, np.zeros(2), rng.standard_normal((n_out, 2)) * 0.5,
                  np.zeros(n_out))
        yield f"mlp_train {name} (n=4096, 5 epochs)", \
            (lambda s, p: lambda f: f(p, X, Y, perms, 1e-3, 128, s))(strategy, params), \
            mlp_train_numba, mlp_train_numpy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _backend.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<40}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call, fast, slow in cases():
        call(fast)  # compile
        tn = best_of(lambda: call(fast), args.repeat)
        tp = best_of(lambda: call(slow), args.repeat)
        print(f"{name:<40}{tn * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tn:>9.1f}x")


if __name__ == "__main__":
    main()
