"""Time the compiled kernels against the numpy fallback on typical workloads.

Run with ``python3 benchmarks/bench_kernels.py``. Prints one line per kernel
with the median time of each backend and the speed-up.
"""

import argparse
import statistics
import time

import numpy as np

from fewmeta import _kernels


def _workloads(k: int, seed: int):
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 0.6, k)
    s2 = 0.25 * rng.chisquare(1.0, k).clip(0.04, 2.4)
    taus = np.linspace(0.0, 4.0, 801)
    means = rng.normal(0.0, 0.3, 801)
    sds = 0.2 + rng.random(801)
    w = rng.random(801)
    w /= w.sum()
    return {
        "q_stat": lambda m: m.q_stat(y, s2, 0.3),
        "maximize_tau (REML)": lambda m: m.maximize_tau(y, s2, m.REML, 1.0, 0.0, 10.0, 1e-8),
        "solve_q": lambda m: m.solve_q(y, s2, k - 1.0, 0.0, 10.0, 1e-12),
        "marginal_grid (801 nodes)": lambda m: m.marginal_grid(y, s2, taus),
        "mixture_quantile (801 comps)": lambda m: m.mixture_quantile(0.975, means, sds, w),
    }


def _time(fn, repeat: int) -> float:
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    print(f"k = {args.k}, median of {args.repeat} calls")
    print(f"{'kernel':<30}{'cython (us)':>14}{'python (us)':>14}{'speed-up':>10}")
    for name, call in _workloads(args.k, args.seed).items():
        tc = _time(lambda: call(_kernels.compiled), args.repeat)
        tp = _time(lambda: call(_kernels.pure), args.repeat)
        print(f"{name:<30}{1e6 * tc:>14.2f}{1e6 * tp:>14.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
