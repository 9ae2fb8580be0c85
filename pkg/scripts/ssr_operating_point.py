#!/usr/bin/env python3
"""Tabulate SSR decode rates against the constant c under a binary symmetric channel.

The tag signal decays like (1 - 2p)^(ell + 1) with ell = ceil(c log2 n), so small
c keeps tags usable at larger p.  Columns: c, ell, p, analytic tag match,
measured ONE rate on codewords and BOT rate on random strings.

Usage: python3 scripts/ssr_operating_point.py [--n 1024] [--trials 4000]
"""

import argparse

from prc.harness import ExperimentConfig, run_report
from prc.ssr import SsrParams, ssr_expected_tag_match


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=1024)
    parser.add_argument("--eps", type=float, default=0.25)
    parser.add_argument("--trials", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    print("c,ell,p,expected_tag_match,one_rate,random_bot_rate")
    for c in (0.1, 0.2, 0.3, 0.5):
        params = {"n": args.n, "eps": args.eps, "c": c}
        ell = SsrParams(**params).ell
        for p in (0.0, 0.05, 0.1, 0.2):
            base = dict(scheme="ssr", params=params, trials=args.trials, seed=args.seed, keys=4)
            one = run_report(ExperimentConfig(kind="decode", channel={"kind": "bsc", "p": p}, **base)).rows[0].estimate
            bot = run_report(ExperimentConfig(kind="soundness", options={"corpus": ["random"]}, **base)).row("bot_rate", member="all").estimate
            print(f"{c},{ell},{p},{ssr_expected_tag_match(args.eps, p, ell):.5f},{one:.4f},{bot:.4f}", flush=True)


if __name__ == "__main__":
    main()
