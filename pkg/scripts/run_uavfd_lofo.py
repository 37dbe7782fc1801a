#!/usr/bin/env python3
"""Leave-one-flight-out evaluation on a real hexarotor dataset.

Expects a directory with manifest.csv mapping the flight CSVs (columns: path,
flight_id, severity, motor, platform). Per-arm logs can be listed as
'|'-separated paths in one manifest row; they are averaged into a single
6-channel stream at load time.
"""

import argparse
import sys

from propfault.cli import main as cli_main


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--out", default="uavfd_eval")
    parser.add_argument("--methods", default="lrt,mahalanobis,autoencoder,sprt")
    parser.add_argument("--sample-rate", type=float, default=376.0,
                        help="fallback rate for logs without timestamps")
    args = parser.parse_args(argv)
    return cli_main([
        "eval-lofo", "--manifest", args.manifest, "--out", args.out,
        "--methods", args.methods,
    ])


if __name__ == "__main__":
    sys.exit(main())
