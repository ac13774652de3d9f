"""Sweep the quadratic-feasibility condition over a parameter box.

Prints the fraction of infeasible cells and the feasible cells grouped by
(K, N), then writes the full cell table as CSV.

    python scripts/run_theorem_scan.py --resolution 8 --out scan_cells.csv
"""

import argparse
import time
from collections import Counter
from pathlib import Path

from mining_auction.analysis import ScanBox, scan_theorem
from mining_auction.cli import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=8)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    t0 = time.perf_counter()
    rep = scan_theorem(ScanBox(resolution=args.resolution), workers=args.threads)
    dt = time.perf_counter() - t0
    n = rep.cells["prize"].size
    print(f"{n} cells in {dt:.2f}s")
    print(f"infeasible fraction {rep.fraction_infeasible:.4f}, root/sampling agreement {rep.agreement_fraction:.4f}")

    by_kn = Counter((c["horizon"], c["miners"]) for c in rep.feasible_cells)
    if by_kn:
        print("feasible cells by (K, N):")
        for (k, m), count in sorted(by_kn.items()):
            print(f"  K={k:<3d} N={m:<3d} {count}")

    if args.out is not None:
        cols = ["prize", "horizon", "miners", "c_min", "c_other", "b", "d", "margin", "feasible"]
        write_csv(args.out, cols, zip(*[rep.cells[k] for k in cols]))
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
