"""Ranks of the off-diagonal blocks B(I,1) of an Example-0 matrix per block size.

Prints SRRSC and SVD ranks for each block size and tolerance as CSV. Passing
several tolerances shows how strongly the reported ranks depend on the
threshold.

    python3 scripts/rank_table.py --n 16384 --grid 4x4 --nb-list 64,4096 --tols 1e-12,1e-15
"""

import argparse
import csv
import sys
import time

from psdc.cli import rank_table
from psdc.gridsim import parse_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--grid", default="4x4")
    ap.add_argument("--nb-list", default="64,128,256,1024")
    ap.add_argument("--blocks", default="2,3,4")
    ap.add_argument("--tols", default="1e-12")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-svd", action="store_true", help="skip the SVD reference ranks")
    args = ap.parse_args(argv)
    grid = parse_grid(args.grid)
    nbs = [int(x) for x in args.nb_list.split(",")]
    blocks = [int(x) for x in args.blocks.split(",")]
    out = csv.DictWriter(sys.stdout, fieldnames=["tol", "nb", "block", "rows", "cols", "srrsc_rank", "svd_rank", "seconds"])
    out.writeheader()
    for tol in (float(x) for x in args.tols.split(",")):
        start = time.perf_counter()
        rows = rank_table(args.n, grid, nbs, tol, blocks, args.seed, with_svd=not args.no_svd)
        secs = round(time.perf_counter() - start, 1)
        for r in rows:
            out.writerow({"tol": tol, "seconds": secs, "svd_rank": "", **r})
        sys.stdout.flush()


if __name__ == "__main__":
    main()
