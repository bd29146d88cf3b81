"""Compare the numba and numpy kernel backends on representative workloads.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each workload
is first checked for identical output across backends, then timed (best of
``repeat`` runs, numba compilation excluded by a warm-up call).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adskew import deliverysim, kernels, rng
from adskew.core import BiddingStrategy, CampaignConfig


def _workloads():
    keys = rng.draw_keys(rng.stream_key(7), 10_000)
    yield "binomial n=10000 p=0.5 x10k", lambda b: kernels.sample_unknown_male(keys, 10_000, 0.5, backend=b)
    yield "binomial n=300 p=0.3 x10k", lambda b: kernels.sample_unknown_male(keys, 300, 0.3, backend=b)
    yield "normal prior n=10000 x10k", lambda b: kernels.sample_unknown_male(keys, 10_000, 0.55, 0.005, True, backend=b)

    market = deliverysim.calibration_market(daily_opportunities=20_000)
    batch = deliverysim.generate_day(market, rng.stream_key(1))
    scores = batch.cpc_cents.astype(np.float64)
    yield "allocate 20k opportunities", lambda b: kernels.allocate_campaign(
        scores, batch.cpc_cents, batch.will_click, batch.will_convert, batch.label, 200_000, backend=b
    )

    campaign = CampaignConfig("bench", BiddingStrategy.MAX_CLICKS, 6500)
    small = deliverysim.calibration_market()
    yield "42-day horizon, 1 campaign", lambda b: deliverysim.run_horizon([campaign], small, 42, 0, backend=b)


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    print(f"{'workload':32} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  equal")
    ok = True
    for name, fn in _workloads():
        out_numba = fn("numba")  # warm-up compiles
        out_numpy = fn("numpy")
        equal = _same(out_numba, out_numpy)
        ok &= equal
        t_numba = _best(lambda: fn("numba"), args.repeat)
        t_numpy = _best(lambda: fn("numpy"), args.repeat)
        print(f"{name:32} {t_numba:10.4f} {t_numpy:10.4f} {t_numpy / t_numba:8.1f}x  {equal}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
