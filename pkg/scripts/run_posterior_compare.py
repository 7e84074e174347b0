#!/usr/bin/env python3
"""Sweep KL and Hellinger distances between the two posteriors.

The shipped config uses 2000 common-random-number prior samples per
epsilon; expect a few minutes of wall time. Artifacts land in
artifacts/posterior_compare/.
"""
import pathlib
import sys

from opttomo.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = ["posterior-compare", "--config",
            str(HERE / "configs" / "posterior_compare.json")]
    sys.exit(main(args + sys.argv[1:]))
