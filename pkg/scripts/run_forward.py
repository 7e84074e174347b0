#!/usr/bin/env python3
"""Evaluate both forward maps on the reference sweep and dump CSVs."""
import pathlib
import sys

from opttomo.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = ["forward", "--config", str(HERE / "configs" / "forward.json")]
    sys.exit(main(args + sys.argv[1:]))
