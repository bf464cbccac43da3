"""Time the numba and numpy paths of each hot kernel and check they agree.

    python benchmarks/bench_kernels.py [--trials 200] [--samples 2000000]
"""

import argparse
import time

import numpy as np

from lockinfer import kernels
from lockinfer.evaluation import RankingSpace, draw_observations
from lockinfer.lockmodel import PADLOCK


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--samples", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    t = np.arange(args.samples) / 200.0
    x = np.sin(2 * np.pi * 0.7 * t) + 0.1 * rng.standard_normal(args.samples)
    kernels.interval_contributions_nb(t[:10], x[:10])  # compile outside timing
    tn, (pn, nn) = best_of(lambda: kernels.interval_contributions_nb(t, x), args.repeat)
    tp, (pp, np_) = best_of(lambda: kernels.interval_contributions_np(t, x), args.repeat)
    err = max(np.max(np.abs(pn - pp)), np.max(np.abs(nn - np_)))
    print(f"interval_contributions n={args.samples}: numba {tn*1e3:.1f} ms, numpy {tp*1e3:.1f} ms, "
          f"speedup {tp/tn:.1f}x, max diff {err:.2e}")

    space = RankingSpace.full(PADLOCK)
    sigma = np.array([12.27, 8.49, 4.82])
    truth = rng.integers(0, space.size, args.trials)
    tb = draw_observations(space.theta[truth], sigma, PADLOCK, rng)
    call = (tb, sigma, space.cand.astype(float), space.members, space.lexrank, truth)
    kernels.mc_ranks_nb(tb[:1], sigma, space.cand, space.members, space.lexrank, truth[:1])
    tn, rn = best_of(lambda: kernels.mc_ranks_nb(*call), args.repeat)
    tp, rp = best_of(lambda: kernels.mc_ranks_np(*call), args.repeat)
    same = "identical" if np.array_equal(rn, rp) else "DIFFERENT"
    print(f"mc_ranks padlock 64K x {args.trials} trials: numba {tn*1e3:.1f} ms, numpy {tp*1e3:.1f} ms, "
          f"speedup {tp/tn:.1f}x, ranks {same}")


if __name__ == "__main__":
    main()
