#!/usr/bin/env python3
"""Brownian comparison: the Ito-enhanced scheme against exponential Euler.

Sixteen seeds share their Wiener increments between the scheme and the
reference; the mean-square endpoint gap per level lands in
results/ito_compare/gaps.csv along with the enhancement-swap diagnostics
in report.json.
"""

import pathlib
import sys

from roughheat.cli import main

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    sys.exit(main(["ito-compare", "--config",
                   str(CONFIGS / "ito_compare.json")]))
