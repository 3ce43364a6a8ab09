"""Compare the compiled correlation kernels against the pure-Python fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py --tags 2000000 --repeats 5

Streams are synthetic but shaped like real acquisitions: sorted int64
picosecond tags on two channels with a correlated fraction inside the
coincidence window.
"""

import argparse
import time

import numpy as np

from sagnacsim._kernels import fallback

try:
    from sagnacsim._kernels import _corex
except ImportError:
    _corex = None


def make_streams(n, rng):
    sig = np.cumsum(rng.integers(100, 2000, n).astype(np.int64))
    keep = rng.random(n) < 0.6
    idl = np.sort(sig[keep] + rng.integers(-400, 400, int(keep.sum())))
    return sig, idl


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tags", type=int, default=2_000_000,
                    help="tags on the signal channel")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=99)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    sig, idl = make_streams(args.tags, rng)
    total = len(sig) + len(idl)
    print(f"streams: {len(sig)} + {len(idl)} tags")

    cases = [
        ("match_count", lambda m: m.match_count(sig, idl, 250)),
        ("match_indices", lambda m: m.match_indices(sig, idl, 250)),
        ("delay_histogram", lambda m: m.delay_histogram(sig, idl, 500.0, 6)),
        ("dead_time_mask", lambda m: m.dead_time_mask(sig, 1_000_000)),
    ]
    header = f"{'kernel':<16}{'python':>12}{'compiled':>12}{'speedup':>9}{'tags/s':>12}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = best_of(lambda: call(fallback), args.repeats)
        if _corex is None:
            print(f"{name:<16}{t_py:>11.4f}s{'n/a':>12}{'':>9}{total / t_py:>12.3g}")
            continue
        t_cx = best_of(lambda: call(_corex), args.repeats)
        print(f"{name:<16}{t_py:>11.4f}s{t_cx:>11.4f}s{t_py / t_cx:>8.1f}x"
              f"{total / t_cx:>12.3g}")
    if _corex is None:
        print("compiled extension not built; showing fallback only")


if __name__ == "__main__":
    main()
