"""
SmoothBoost - boosted smooth transition regression trees
Command-line entry point: python app.py <command> [flags]
"""

import os
import sys

# Add project root to path
sys.path.insert(0, os.path.dirname(__file__))

from smoothboost.cli import run


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
