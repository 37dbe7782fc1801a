#!/usr/bin/env python3
"""Regenerate the frozen synthetic benchmark and run the full LOFO evaluation.

Writes the corpus, the feature table, and the evaluation report (JSON + CSV
exports) under --out, then prints the per-method summary table. With default
arguments this reproduces the corpus the test suite pins.
"""

import argparse
import sys
from pathlib import Path

from propfault.cli import main as cli_main


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="benchmark_run", help="output directory")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--flights", type=int, default=18)
    parser.add_argument("--motors", type=int, default=6)
    parser.add_argument(
        "--methods", default="lrt,mahalanobis,autoencoder,sprt",
        help="comma-separated method families",
    )
    args = parser.parse_args(argv)

    out = Path(args.out)
    corpus = out / "corpus"
    rc = cli_main([
        "--seed", str(args.seed), "synth", "--out", str(corpus),
        "--flights", str(args.flights), "--motors", str(args.motors),
    ])
    if rc:
        return rc
    rc = cli_main([
        "extract", "--manifest", str(corpus / "manifest.csv"),
        "--out", str(out / "features.csv"),
    ])
    if rc:
        return rc
    return cli_main([
        "--seed", str(args.seed), "eval-lofo",
        "--manifest", str(corpus / "manifest.csv"),
        "--out", str(out / "eval"), "--methods", args.methods,
    ])


if __name__ == "__main__":
    sys.exit(main())
