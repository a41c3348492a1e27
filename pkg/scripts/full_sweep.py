"""Synthesize the source policy and run the shipped 125-context sweep with its oracle slice.

Usage: python3 scripts/full_sweep.py [OUT_DIR] [--workers N]
"""
import argparse
import time

from pi_transfer.cli import main

parser = argparse.ArgumentParser()
parser.add_argument("out", nargs="?", default="runs/full_sweep")
parser.add_argument("--workers", type=int, default=1)
args = parser.parse_args()

start = time.perf_counter()
code = main(["-v", "sweep", "--out", args.out, "--workers", str(args.workers)])
print(f"finished in {time.perf_counter() - start:.0f} s (exit {code})")
raise SystemExit(code)
