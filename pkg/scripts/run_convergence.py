#!/usr/bin/env python3
"""Self-convergence sweeps: one smooth driver, then eight Brownian seeds.

Writes rates.csv and report.json under results/convergence_{sinusoid,fbm}.
"""

import pathlib
import sys

from roughheat.cli import main

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    for name in ("convergence_sinusoid.json", "convergence_fbm.json"):
        rc = main(["convergence", "--config", str(CONFIGS / name)])
        if rc != 0:
            sys.exit(rc)
    sys.exit(0)
