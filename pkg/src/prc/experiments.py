"""Acceptance experiments: fixed configs, analytic targets and pass/fail checks.

Each :class:`Criterion` owns the configs it runs and a check that turns the
resulting reports into a verdict.  Targets come from closed-form oracles in
:mod:`prc.bits`, :mod:`prc.ssr` and :mod:`prc.watermark`, never from the runs.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from prc.bits import HypSpec, hypergeom_lower_parity_bias, xor_parity_zero_prob
from prc.harness import ExperimentConfig, TrialReport, run_experiment, run_report
from prc.hyperloop import HyperloopParams
from prc.ssr import SsrParams, ssr_expected_tag_match

SEED = 20240601

HYPERLOOP = {"n": 4096, "ell": 4}
WEAKXOR = {"n": 128, "m": 128, "t": 4, "eta": 0.05, "eps": 0.0}
SSR_E2E = {"n": 1024, "eps": 0.25, "delta": 0.01, "c": 0.1}
AMPLIFY_HYP = {"calibrate": 100_000, "channel": {"kind": "hyp", "d": 12}, "failure": 0.01}
AMPLIFY_BSC = {"calibrate": 100_000, "channel": {"kind": "bsc", "p": 0.1}, "failure": 0.01}


@dataclass(frozen=True)
class Outcome:
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class Criterion:
    number: int
    title: str
    configs: dict[str, ExperimentConfig]
    check: Callable[[dict[str, TrialReport]], tuple[bool, str]]
    time_limit: float | None = None
    reports: dict[str, TrialReport] = field(default_factory=dict)

    def run(self, workers: int = 1) -> Outcome:
        t0 = time.perf_counter()
        self.reports = {name: run_report(cfg, workers) for name, cfg in self.configs.items()}
        passed, detail = self.check(self.reports)
        elapsed = time.perf_counter() - t0
        if self.time_limit is not None and elapsed > self.time_limit:
            passed, detail = False, f"{detail}; runtime {elapsed:.0f}s exceeds {self.time_limit:.0f}s"
        return Outcome(passed, detail, elapsed)


def _se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 1e-12) / n)


def _aggregate(report: TrialReport, metric: str):
    for r in report.rows:
        if r.metric == metric and r.cell.get("key", "") == "" and r.cell.get("member", "all") == "all":
            return r
    raise KeyError(metric)


# --- 1 ----------------------------------------------------------------------


def hyperloop_clean_target(ell: int) -> float:
    """ONE rate of the single-loop decoder on clean codewords: ``(1 + 2^-ell) / 2``."""
    return 0.5 * (1 + 2.0**-ell)


def _crit1() -> Criterion:
    cfg = ExperimentConfig(kind="decode", scheme="hyperloop", params=HYPERLOOP, trials=1_000_000, keys=100, seed=SEED, chunk=1 << 16)

    def check(rep):
        est = _aggregate(rep["clean"], "one_rate").estimate
        target = hyperloop_clean_target(HYPERLOOP["ell"])
        return abs(est - target) <= 0.005, f"ONE rate {est:.5f}, target {target:.5f} +- 0.005"

    return Criterion(1, "hyperloop clean bias", {"clean": cfg}, check, 120)


# --- 2 ----------------------------------------------------------------------


def hyperloop_channel_bound(params: HyperloopParams, rate: float) -> float:
    """Lower bound on the ONE rate after flipping ``floor(rate * L)`` positions of a length-``L`` codeword."""
    length = params.codeword_length
    d = math.floor(rate * length)
    channel = hypergeom_lower_parity_bias(HypSpec(length, d, params.ell))
    return 0.5 * (1 + 2.0**-params.ell * channel)


def _crit2() -> Criterion:
    cfg = ExperimentConfig(
        kind="decode", scheme="hyperloop", params=HYPERLOOP, channel={"kind": "hyp", "rate": 0.1},
        trials=1_000_000, keys=100, seed=SEED + 2, chunk=1 << 16,
    )

    def check(rep):
        row = _aggregate(rep["hyp"], "one_rate")
        bound = hyperloop_channel_bound(HyperloopParams(**HYPERLOOP), 0.1)
        floor = bound - 3 * _se(row.estimate, row.trials)
        return row.estimate >= floor, f"ONE rate {row.estimate:.5f}, bound {bound:.5f} (minus 3 SE: {floor:.5f})"

    return Criterion(2, "hyperloop under hypergeometric channel", {"hyp": cfg}, check, 300)


# --- 3 ----------------------------------------------------------------------


def _crit3() -> Criterion:
    base = ExperimentConfig(kind="decode", scheme="weakxor", params=WEAKXOR, trials=1_000_000, keys=100, seed=SEED + 3, chunk=1 << 16)
    configs = {"clean": base, "random": replace(base, options={"random_input": True})}

    def check(rep):
        clean = _aggregate(rep["clean"], "one_rate").estimate
        rand = _aggregate(rep["random"], "one_rate").estimate
        target = xor_parity_zero_prob([WEAKXOR["eta"]] * WEAKXOR["t"])
        ok = abs(clean - target) <= 0.005 and abs(rand - 0.5) <= 0.005
        return ok, f"clean {clean:.5f} (target {target:.5f}), random {rand:.5f} (target 0.5), tol 0.005"

    return Criterion(3, "weakxor clean bias", configs, check, 120)


# --- 4 ----------------------------------------------------------------------


def _crit4() -> Criterion:
    params = {"n": 64, "m": 128, "t": 4, "eta": 0.05}
    configs = {
        f"eps={eps}": ExperimentConfig(kind="rank-attack", scheme="weakxor", params={**params, "eps": eps}, trials=1000, seed=SEED + 4)
        for eps in (0.0, 0.05)
    }

    def check(rep):
        a0 = rep["eps=0.0"].row("advantage").estimate
        a5 = rep["eps=0.05"].row("advantage").estimate
        return a0 >= 0.99 and a5 <= 0.05, f"advantage {a0:.4f} at eps=0 (need >= 0.99), {a5:.4f} at eps=0.05 (need <= 0.05)"

    return Criterion(4, "rank attack dichotomy", configs, check, 60)


# --- 5 ----------------------------------------------------------------------


def _crit5() -> Criterion:
    params = {"n": 1024, "eps": 0.1, "c": 0.3}
    cfg = ExperimentConfig(kind="tag-match", scheme="ssr", params=params, channel={"kind": "bsc", "p": 0.1}, trials=1_000_000, keys=10, seed=SEED + 5)

    def check(rep):
        ell = SsrParams(**params).ell
        target = ssr_expected_tag_match(0.1, 0.1, ell)
        est = _aggregate(rep["tags"], "tag_match").estimate
        return ell == 3 and abs(est - target) <= 0.002, f"E[w] {est:.5f}, target {target:.5f} +- 0.002 (ell={ell})"

    return Criterion(5, "SSR tag expectation", {"tags": cfg}, check, 120)


# --- 6 ----------------------------------------------------------------------


def _crit6() -> Criterion:
    decode = ExperimentConfig(kind="decode", scheme="ssr", params=SSR_E2E, channel={"kind": "bsc", "p": 0.1}, trials=10_000, keys=100, seed=SEED + 6)
    sound = ExperimentConfig(kind="soundness", scheme="ssr", params=SSR_E2E, trials=10_000, seed=SEED + 6, chunk=1000, options={"fresh_keys": True})

    def check(rep):
        one = _aggregate(rep["decode"], "one_rate").estimate
        bot = _aggregate(rep["soundness"], "bot_rate").estimate
        kprime = SsrParams(**SSR_E2E).kprime
        return one >= 0.95 and bot >= 0.99, f"ONE under BSC(0.1) {one:.4f} (need >= 0.95), corpus BOT {bot:.4f} (need >= 0.99), k'={kprime}"

    return Criterion(6, "SSR end to end", {"decode": decode, "soundness": sound}, check, 300)


# --- 7 ----------------------------------------------------------------------


def _crit7() -> Criterion:
    decode = ExperimentConfig(
        kind="decode", scheme="weakxor", params=WEAKXOR, amplify=AMPLIFY_HYP, channel={"kind": "hyp", "rate": 0.1},
        trials=10_000, keys=10, seed=SEED + 7, chunk=1000,
    )
    sound = replace(decode, kind="soundness", channel=None, options={"corpus": ["random"]})

    def check(rep):
        one = _aggregate(rep["decode"], "one_rate").estimate
        bot = _aggregate(rep["soundness"], "bot_rate").estimate
        t = rep["decode"].row("t").estimate
        return one >= 0.99 and bot >= 0.99, f"T={t:.0f}: corrupted ONE {one:.4f}, random BOT {bot:.4f} (both need >= 0.99)"

    return Criterion(7, "amplified weakxor", {"decode": decode, "soundness": sound}, check, 600)


# --- 8 ----------------------------------------------------------------------


def _crit8() -> Criterion:
    cfg = ExperimentConfig(kind="parity-oracle", scheme="uniform", trials=1, seed=SEED + 8, options={"max_population": 30})

    def check(rep):
        r = rep["oracle"]
        bad = int(r.row("violations").estimate)
        worst = r.row("worst_margin")
        where = f"(N, K, t) = ({worst.cell['N']}, {worst.cell['K']}, {worst.cell['t']})"
        return bad == 0, f"{bad} of {worst.trials} specs outside the bounds; worst margin {worst.estimate:.5f} at {where}"

    return Criterion(8, "even-parity oracle vs bounds", {"oracle": cfg}, check, 60)


# --- 9 ----------------------------------------------------------------------


def _crit9() -> Criterion:
    cfg = ExperimentConfig(
        kind="marginal", scheme="uniform", trials=1_000_000, seed=SEED + 9, chunk=1 << 17,
        options={"n": 8}, sweep={"options.model": ["constant:p=0.3", "sinusoidal:amplitude=0.25"]},
    )

    def check(rep):
        tvs = {r.cell["model"]: r.estimate for r in rep["tv"].rows if r.metric == "tv_plain_vs_seeded"}
        return all(v <= 0.01 for v in tvs.values()), ", ".join(f"{m}: TV {v:.5f}" for m, v in tvs.items()) + " (need <= 0.01)"

    return Criterion(9, "watermark marginal preservation", {"tv": cfg}, check, 180)


# --- 10 ---------------------------------------------------------------------


def _crit10() -> Criterion:
    cfg = ExperimentConfig(
        kind="watermark", scheme="weakxor", params=WEAKXOR, amplify=AMPLIFY_BSC, trials=1000, keys=10, seed=SEED + 10,
        chunk=100, options={"model": "sinusoidal:amplitude=0.1"},
    )

    def check(rep):
        r = rep["watermark"]
        one, bot = r.row("detect_one_rate").estimate, r.row("plain_bot_rate").estimate
        return one >= 0.99 and bot >= 0.99, f"T={r.row('t').estimate:.0f}: watermarked ONE {one:.4f}, plain BOT {bot:.4f} (both need >= 0.99)"

    return Criterion(10, "watermark detection", {"watermark": cfg}, check, 600)


# --- 12 ---------------------------------------------------------------------


def _crit12() -> Criterion:
    cfg = ExperimentConfig(kind="distinguish", scheme="uniform", params={"n": 256}, trials=10_000, seed=SEED + 12)

    def check(rep):
        rows = rep["null"].rows
        off = [r.cell["test"] for r in rows if not r.ci_lo <= 0.0 <= r.ci_hi]
        summary = ", ".join(f"{r.cell['test']} {r.estimate:+.4f}" for r in rows)
        return not off and len(rows) >= 3, f"{summary}; outside CI: {off or 'none'}"

    return Criterion(12, "distinguisher null calibration", {"null": cfg}, check)


def criteria() -> list[Criterion]:
    return [_crit1(), _crit2(), _crit3(), _crit4(), _crit5(), _crit6(), _crit7(), _crit8(), _crit9(), _crit10(), _crit12()]


def reproducibility(crits: list[Criterion], workers: int = 8) -> Outcome:
    """Rerun every config: twice serially and once with ``workers``; compare CSV bytes."""
    t0 = time.perf_counter()
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        for crit in crits:
            for name, cfg in crit.configs.items():
                outs = []
                for i, w in enumerate((1, 1, workers)):
                    path = Path(tmp) / f"c{crit.number}-{name}-{i}.csv"
                    run_experiment(cfg, path, workers=w)
                    outs.append(path.read_bytes())
                if not outs[0] == outs[1] == outs[2]:
                    mismatched.append(f"{crit.number}:{name}")
    total = sum(len(c.configs) for c in crits)
    detail = f"{total - len(mismatched)} of {total} experiment CSVs byte-identical across 2 serial runs and {workers} workers"
    if mismatched:
        detail += f"; mismatched {mismatched}"
    return Outcome(not mismatched, detail, time.perf_counter() - t0)
