"""Check the channel simulator: E[log K] bound and chi-square exactness.

Usage: python scripts/validate_sfrl.py [--seed N] [--out DIR]
"""
import sys
from pathlib import Path

from rpredict.experiments.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "sfrl_validate.json"

if __name__ == "__main__":
    sys.exit(main(["sfrl-validate", "--config", str(CONFIG), *sys.argv[1:]]))
