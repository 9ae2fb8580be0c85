#!/usr/bin/env python3
"""List every (N, K, t) with N <= max where the exact even-parity probability of
Hyp(N, K, t) leaves the two-sided bound, worst margins first.

Usage: python3 scripts/parity_oracle.py [--max 30] [--top 10]
"""

import argparse

from prc.harness import parity_oracle_sweep


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--max", type=int, default=30)
    parser.add_argument("--top", type=int, default=10)
    args = parser.parse_args()
    rows = parity_oracle_sweep(args.max)
    bad = [r for r in rows if not r["inside"]]
    print(f"{len(bad)} of {len(rows)} triples outside the bound")
    bad.sort(key=lambda r: min(r["exact"] - r["lower"], r["upper"] - r["exact"]))
    print("N,K,t,exact,lower,upper")
    for r in bad[: args.top]:
        print(f"{r['N']},{r['K']},{r['t']},{r['exact']:.6f},{r['lower']:.6f},{r['upper']:.6f}")


if __name__ == "__main__":
    main()
