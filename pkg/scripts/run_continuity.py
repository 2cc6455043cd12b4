#!/usr/bin/env python3
"""Perturbation-ratio experiment over four Brownian seeds.

Perturbs the initial condition along the first mode and the driver by a
smooth bump, then reports the solution-distance to data-distance ratios
at two perturbation sizes.  Writes results/continuity_fbm/.
"""

import pathlib
import sys

from roughheat.cli import main

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    sys.exit(main(["continuity", "--config",
                   str(CONFIGS / "continuity_fbm.json"),
                   "--eps", "1e-2,1e-3"]))
