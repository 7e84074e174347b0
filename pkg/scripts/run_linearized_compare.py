#!/usr/bin/env python3
"""Compare linearized (Gaussian) posteriors: kernel banks, maps, moments."""
import pathlib
import sys

from opttomo.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    args = ["linearized-compare", "--config",
            str(HERE / "configs" / "linearized_compare.json")]
    sys.exit(main(args + sys.argv[1:]))
