"""Times the descent kernel: compiled extension vs numpy fallback.

Both kernels implement the same in-place ``run_gd_chunk`` contract, so the
comparison is apples to apples: identical starting point, identical step
count, final losses checked to agree before any number is reported.

Usage: python3 benchmarks/bench_gd.py [--steps N] [--repeats K]
"""

import argparse
import time

import numpy as np

from nrc_lab import HAVE_COMPILED, _gd_numpy
from nrc_lab.dataset import SyntheticSpec, compute_target_stats, generate_synthetic

PROBLEMS = [
    # (target_dim, feature_dim, num_samples)
    (1, 8, 64),
    (2, 16, 64),
    (3, 24, 256),
]


def make_problem(n, d, m, seed):
    spec = SyntheticSpec(
        input_dim=8,
        target_dim=n,
        num_samples=m,
        target_covariance=np.diag(np.linspace(2.0, 1.0, n)),
        map_kind="linear",
        noise_std=0.0,
        seed=seed,
    )
    y = generate_synthetic(spec).targets.values
    rng = np.random.default_rng(seed + 1)
    w = 0.1 * rng.normal(size=(n, d))
    h = 0.1 * rng.normal(size=(d, m))
    b = np.zeros(n)
    return w, h, b, y


def time_kernel(kernel, problem, steps, repeats):
    w0, h0, b0, y = problem
    best = np.inf
    last = None
    for _ in range(repeats):
        w, h, b = w0.copy(), h0.copy(), b0.copy()
        start = time.perf_counter()
        taken, diverged, last = kernel(w, h, b, y, 0.01, 0.01, 0.05, steps, 1e12)
        elapsed = time.perf_counter() - start
        assert taken == steps and not diverged
        best = min(best, elapsed)
    return best, last


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    kernels = [("numpy", _gd_numpy.run_gd_chunk)]
    if HAVE_COMPILED:
        from nrc_lab import _speedups

        kernels.insert(0, ("compiled", _speedups.run_gd_chunk))
    else:
        print("compiled extension not importable; timing the fallback only")

    header = f"{'problem':<18}" + "".join(f"{name + ' (s)':>14}" for name, _ in kernels)
    if len(kernels) == 2:
        header += f"{'speedup':>10}"
    print(f"{args.steps} steps per run, best of {args.repeats} repeats")
    print(header)
    print("-" * len(header))

    for n, d, m in PROBLEMS:
        problem = make_problem(n, d, m, seed=n)
        times = []
        losses = []
        for _, kernel in kernels:
            elapsed, last = time_kernel(kernel, problem, args.steps, args.repeats)
            times.append(elapsed)
            losses.append(last)
        if len(losses) == 2:
            scale = max(abs(losses[0]), 1e-300)
            assert abs(losses[0] - losses[1]) <= 1e-9 * scale, (
                f"kernels disagree on n={n}, d={d}, m={m}: {losses}"
            )
        row = f"n={n} d={d:<3} M={m:<5}" + "".join(f"{t:>14.4f}" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
