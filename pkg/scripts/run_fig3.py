"""Regenerate the minimax regression rate/risk sweep (fig3.csv).

Usage: python scripts/run_fig3.py [--seed N] [--out DIR]
"""
import sys
from pathlib import Path

from rpredict.experiments.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "fig3.json"

if __name__ == "__main__":
    sys.exit(main(["fig3", "--config", str(CONFIG), *sys.argv[1:]]))
