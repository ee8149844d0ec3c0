"""Compare the structured multiply variants with the dense baseline.

Random ``A`` times an Example-0 Cauchy-like ``B`` on several grids; prints one
CSV row per (grid, variant) with relative error, bytes, messages, flops and
compression counters.

    python3 scripts/psmma_counters.py --n 1024 --grids 2x2,2x3,4x4
"""

import argparse
import csv
import sys

from psdc.cli import psmma_comparison
from psdc.gridsim import parse_grid
from psdc.psmma import VARIANTS


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--grids", default="1x1,2x2,2x3,4x4")
    ap.add_argument("--nb", type=int, default=64)
    ap.add_argument("--tol", type=float, default=1e-12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = None
    for text in args.grids.split(","):
        grid = parse_grid(text)
        for row in psmma_comparison(args.n, grid, VARIANTS, args.nb, args.tol, args.seed):
            row = {"grid": text, **row}
            if out is None:
                out = csv.DictWriter(sys.stdout, fieldnames=list(row))
                out.writeheader()
            out.writerow(row)


if __name__ == "__main__":
    main()
