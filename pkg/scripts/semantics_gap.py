"""Compare exact-at-K and first-success win probabilities as K grows.

The exact-at-K event gets rarer with K while first-success approaches the
share p_i / sum(p). A seeded simulation is printed alongside as a check.
"""

import argparse

import numpy as np

from mining_auction.race import (
    EXACT_AT_K,
    FIRST_SUCCESS,
    exact_win_prob,
    first_success_win_prob,
    simulate_races,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.3, 0.2])
    ap.add_argument("--max-k", type=int, default=8)
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = np.array(args.p)
    print(f"p = {p.tolist()}")
    print(f"{'K':>3} {'miner':>5} {'exact-at-K':>11} {'sim':>9} {'first-succ':>11} {'sim':>9}")
    for k in range(1, args.max_k + 1):
        qe = exact_win_prob(p, k).q
        qf = first_success_win_prob(p, k).q
        se = simulate_races(p, k, args.trials, args.seed, EXACT_AT_K).q_hat
        sf = simulate_races(p, k, args.trials, args.seed, FIRST_SUCCESS).q_hat
        for i in range(p.size):
            print(f"{k:3d} {i:5d} {qe[i]:11.6f} {se[i]:9.6f} {qf[i]:11.6f} {sf[i]:9.6f}")


if __name__ == "__main__":
    main()
