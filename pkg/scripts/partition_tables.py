#!/usr/bin/env python3
"""Point-removal tables: the N = 38 worked example and a weighted-sum sweep.

Writes results/partition/trace.csv (sweep counts with their bound slack)
and results/partition/sweep.csv (neighbor-weighted sums for N up to 2^14).
"""

import sys

from roughheat.cli import main

if __name__ == "__main__":
    rc = main(["partition", "--N", "38", "--out", "results/partition"])
    if rc != 0:
        sys.exit(rc)
    sys.exit(main(["partition", "--sweep", "16384", "--out", "results/partition"]))
