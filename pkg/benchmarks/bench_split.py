"""Time the compiled and numpy split-search backends on the same boosting job.

    python3 benchmarks/bench_split.py [--rows N] [--features F] [--rounds R]

Both backends must grow identical trees; the script checks that before
reporting timings.
"""
import argparse
import time

import numpy as np

from fognow import gbdt
from fognow._kernels import BACKENDS


def _job(rows, features, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((rows, features)).cumsum(axis=0)
    x = np.round(x, 2)  # repeated values exercise tie handling
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1 % features] + 0.1 * rng.standard_normal(rows)
    return x, y


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--features", type=int, default=120)
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    x, y = _job(args.rows, args.features, 0)
    config = gbdt.GbdtConfig(n_rounds=args.rounds)
    results = {}
    for name, kernel in sorted(BACKENDS.items()):
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            model = gbdt.fit_arrays(x, y, config=config, best_splits=kernel)
            best = min(best, time.perf_counter() - t0)
        results[name] = (best, model)
        print(f"{name:<8} {best:8.3f} s  ({args.rows} rows x {args.features} features, {args.rounds} rounds)")

    docs = {name: m.to_dict() for name, (_, m) in results.items()}
    same = all(d == next(iter(docs.values())) for d in docs.values())
    print("identical trees:", same)
    if "cython" in results:
        print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x")
    else:
        print("compiled backend not built; only the numpy fallback was timed")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
