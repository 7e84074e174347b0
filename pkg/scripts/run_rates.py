#!/usr/bin/env python3
"""Run the expansion-residual / forward-gap rate study at reference scale.

Takes ~2 minutes single-threaded at the shipped resolution; pass
--threads to spread the epsilon sweep over workers (results identical).
"""
import pathlib
import sys

from opttomo.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = ["rates", "--config", str(HERE / "configs" / "rates.json"),
            "--refine"]
    sys.exit(main(args + sys.argv[1:]))
