"""Time the numba kernels against the numpy fallback on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

The first numba call compiles (or loads from cache) and is excluded.
Results from both backends are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from mechsched import _kernels as kr

WORKLOADS = [
    # (label, kernel, shape)
    ("allocate K  B=20000 n=10", "allocate", (20_000, 10)),
    ("allocate K  B=2000  n=200", "allocate", (2_000, 200)),
    ("ratio K     B=1000  m=1 n=1000", "ratio", (1_000, 1, 1_000)),
    ("ratio K     B=5000  m=3 n=20", "ratio", (5_000, 3, 20)),
    ("ratio P     B=1000  m=1 n=1000", "ratio_p", (1_000, 1, 1_000)),
]


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernels(kind):
    if kind == "allocate":
        return kr.K, kr._allocate_batch_np, getattr(kr, "_allocate_batch_nb", None)
    mech = kr.P if kind == "ratio_p" else kr.K
    return mech, kr._ratio_batch_np, getattr(kr, "_ratio_batch_nb", None)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="shrink batches 10x")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"backend at import: {kr.BACKEND}, threads: {kr.apply_thread_limit()}")
    print(f"{'workload':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for label, kind, shape in WORKLOADS:
        if args.quick:
            shape = (max(1, shape[0] // 10),) + shape[1:]
        costs = 10 ** rng.uniform(-3, 3, size=shape)
        mech, np_fn, nb_fn = kernels(kind)
        x, w = kr.nodes_for(shape[-1])
        t_np = best_of(lambda: np_fn(costs, mech, x, w), args.repeat)
        if nb_fn is None:
            print(f"{label:34s} {t_np:10.4f} {'-':>10s} {'-':>8s}")
            continue
        ref = np_fn(costs, mech, x, w)[0]
        got = nb_fn(costs, mech, x, w)[0]  # compile / cache load happens here
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-15):
            raise SystemExit(f"{label}: backends disagree")
        t_nb = best_of(lambda: nb_fn(costs, mech, x, w), args.repeat)
        print(f"{label:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
