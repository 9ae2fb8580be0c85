#!/usr/bin/env python3
"""Run the acceptance criteria and print one verdict line per criterion.

Usage: python3 scripts/run_acceptance.py [--only 1 3 5] [--workers 4] [--skip-repro]
Exits 0 when every selected criterion passes, 1 otherwise.
"""

import argparse
import sys

from prc.experiments import criteria, reproducibility


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--skip-repro", action="store_true", help="skip the reproducibility rerun")
    args = parser.parse_args()

    crits = [c for c in criteria() if not args.only or c.number in args.only]
    failed = 0
    for crit in crits:
        out = crit.run(args.workers)
        failed += not out.passed
        print(f"criterion {crit.number} {'PASS' if out.passed else 'FAIL'}: {crit.title}; {out.detail} ({out.seconds:.1f}s)", flush=True)
    if not args.skip_repro and (not args.only or 11 in args.only):
        out = reproducibility(crits, workers=8)
        failed += not out.passed
        print(f"criterion 11 {'PASS' if out.passed else 'FAIL'}: reproducibility; {out.detail} ({out.seconds:.1f}s)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
