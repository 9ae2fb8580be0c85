#!/usr/bin/env python3
"""Run an experiment config (with its sweep grid) and print the CSV.

Usage: python3 scripts/sweep.py scripts/configs/ssr_bsc_sweep.json [--out results/ssr.csv] [--workers 4]
"""

import argparse
import sys
from pathlib import Path

from prc.harness import load_config, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--out", help="CSV path (default: results/<config stem>.csv)")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out or Path("results") / (Path(args.config).stem + ".csv"))
    report = run_experiment(cfg, out, workers=args.workers)
    sys.stdout.write(report.to_csv())
    print(f"# wrote {out} and {out}.json", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
