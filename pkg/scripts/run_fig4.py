"""Regenerate the two-source classification curves (long-format CSV).

Usage: python scripts/run_fig4.py [--seed N] [--out DIR]
"""
import sys
from pathlib import Path

from rpredict.experiments.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "fig4.json"

if __name__ == "__main__":
    sys.exit(main(["fig4", "--config", str(CONFIG), *sys.argv[1:]]))
