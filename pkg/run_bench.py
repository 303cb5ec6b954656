"""Launcher for the benchmark / training command line, e.g.

    python run_bench.py bench sweep --config configs/iteration_removal.env
"""
import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
