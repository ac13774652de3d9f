"""Solve the symmetric logit equilibrium for a ladder of noise levels.

For each mu the script reports convergence, the mean bid and the total
variation distance of the bid distribution to uniform.
"""

import argparse

from mining_auction.model import AllocationSpec, AuctionParams
from mining_auction.qre import BidGrid, solve_qre


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--prize", type=float, default=10.0)
    ap.add_argument("--horizon", type=int, default=2)
    ap.add_argument("--miners", type=int, default=2)
    ap.add_argument("--f", type=float, default=0.5, help="constant allocation value")
    ap.add_argument("--grid-points", type=int, default=129)
    ap.add_argument("--mu", type=float, nargs="+", default=[0.05, 0.1, 0.5, 1.0, 5.0])
    args = ap.parse_args()

    alloc = AllocationSpec.constant(args.f)
    grid = BidGrid.uniform(args.prize / args.horizon, args.grid_points)
    print(f"{'mu':>8} {'iters':>6} {'conv':>5} {'mean bid':>10} {'TV':>8}")
    for mu in args.mu:
        sol = solve_qre(alloc, AuctionParams(args.prize, args.horizon, mu), args.miners, grid=grid)
        d = sol.densities[0]
        print(f"{mu:8.3g} {sol.iterations:6d} {str(sol.converged):>5} {d.mean():10.4f} {d.tv_to_uniform():8.4f}")


if __name__ == "__main__":
    main()
