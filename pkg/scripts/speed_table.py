#!/usr/bin/env python3
"""Timing table: cube-level solver versus the point-by-point baseline.

Runs the default desk-scale comparison and, with --full-scale, also times the
cube-level solver at the full 256x256x26 sensor geometry (informational; the
per-pixel baseline at that size would take hours).

Usage:
    python scripts/speed_table.py [--full-scale] [--out bench.csv]
"""

import argparse
import sys

from cubesolve.cli import main as cli


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--full-scale", action="store_true",
                        help="also time the cube-level solver at 256x256x26")
    parser.add_argument("--repeats", default="3")
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    argv = ["bench", "--sizes", "64x64x8", "--methods", "admm,perpixel",
            "--repeats", args.repeats]
    if args.out:
        argv += ["--out", args.out]
    code = cli(argv)
    if code != 0:
        sys.exit(code)

    if args.full_scale:
        print("\n== full sensor geometry, cube-level solver only ==")
        code = cli(["bench", "--sizes", "256x256x26", "--methods", "admm",
                    "--repeats", args.repeats])
        if code != 0:
            sys.exit(code)


if __name__ == "__main__":
    main()
