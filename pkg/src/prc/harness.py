"""Experiment orchestration: configs, trial-parallel Monte Carlo and reports.

Every experiment is split into tasks whose random streams depend only on
``(seed, cell, key block, chunk)``.  Chunk sizes are fixed by the config, not
by the worker count, so serial and parallel runs produce identical counts and
therefore byte-identical CSV files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np
from scipy import stats

from prc.bits import (
    HypSpec,
    RngStream,
    f2_left_kernel_vector,
    hypergeom_even_parity_bounds,
    hypergeom_even_parity_exact,
    uniform_bits,
)
from prc.channels import ChannelSpec, corrupt_batch
from prc.core import AmplifiedScheme, Estimate, ZeroBitScheme, calibrate_alpha_delta, chernoff_repetitions, count_decodes, wilson_interval
from prc.errors import ConfigError, ParameterError
from prc.registry import make_base, make_scheme
from prc.ssr import ssr_expected_tag_match, tag_matches
from prc.watermark import (
    exact_output_distribution,
    expected_null_tv,
    generate_plain_batch,
    generate_seeded_batch,
    output_histogram,
    parse_model,
    total_variation,
    watermark_rates,
)
from prc.weakxor import Verdict, WeakXorScheme, rank_attack, uniform_matrix

KINDS = ("decode", "soundness", "calibrate", "distinguish", "tag-match", "rank-attack", "parity-oracle", "marginal", "watermark")

CORPUS = ("zeros", "ones", "alternating", "pairs", "half", "random", "balanced-header-zeros", "balanced-header-ones")


# ---------------------------------------------------------------------------
# Config and report types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, possibly swept over a parameter grid.

    Sweep keys address ``params`` directly (``eta``), or a nested block with a
    prefix: ``channel.p``, ``amplify.t``, ``options.model``.
    """

    kind: str = "decode"
    scheme: str = "weakxor"
    params: dict[str, Any] = field(default_factory=dict)
    channel: dict[str, Any] | None = None
    amplify: dict[str, Any] | None = None
    trials: int = 1000
    seed: int = 0
    keys: int = 1
    sweep: dict[str, list] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)
    chunk: int = 1 << 14
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.keys < 1 or self.chunk < 1 or self.workers < 1:
            raise ConfigError("keys, chunk and workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit value")
        if self.channel is not None:
            ChannelSpec.from_json(self.channel)

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> ExperimentConfig:
        unknown = set(obj) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Digest of everything that affects results (worker count excluded)."""
        obj = self.to_json()
        obj.pop("workers")
        return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]

    def cells(self) -> list[tuple[dict[str, Any], ExperimentConfig]]:
        """``(swept values, resolved config)`` per grid cell; an empty sweep is one cell."""
        if not self.sweep:
            return [({}, replace(self, sweep={}))]
        names = list(self.sweep)
        out = []
        for values in itertools.product(*(self.sweep[n] for n in names)):
            cfg = replace(self, sweep={})
            for name, value in zip(names, values):
                cfg = _override(cfg, name, value)
            out.append((dict(zip(names, values)), cfg))
        return out


def _override(cfg: ExperimentConfig, name: str, value: Any) -> ExperimentConfig:
    block, dot, key = name.partition(".")
    if not dot:
        if name in ("trials", "keys", "seed"):
            return replace(cfg, **{name: value})
        return replace(cfg, params={**cfg.params, name: value})
    if block not in ("channel", "amplify", "options", "params"):
        raise ConfigError(f"cannot sweep {name!r}")
    current = dict(getattr(cfg, block) or {})
    current[key] = value
    return replace(cfg, **{block: current})


@dataclass(frozen=True)
class Row:
    cell: dict[str, Any]
    metric: str
    estimate: float
    ci_lo: float
    ci_hi: float
    trials: int
    seconds: float = 0.0

    @classmethod
    def proportion(cls, cell: dict, metric: str, est: Estimate, seconds: float = 0.0) -> Row:
        lo, hi = est.ci
        return cls(cell, metric, est.rate, lo, hi, est.trials, seconds)

    @classmethod
    def exact(cls, cell: dict, metric: str, value: float, trials: int, seconds: float = 0.0) -> Row:
        return cls(cell, metric, float(value), float(value), float(value), trials, seconds)


@dataclass
class TrialReport:
    rows: list[Row]
    metadata: dict[str, Any]

    def row(self, metric: str, **cell: Any) -> Row:
        for r in self.rows:
            if r.metric == metric and all(r.cell.get(k) == v for k, v in cell.items()):
                return r
        raise KeyError(f"no row {metric!r} with {cell}")

    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.rows:
            for k in r.cell:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self, timing: bool = False) -> str:
        cols = self.columns()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols + ["metric", "estimate", "ci_lo", "ci_hi", "trials"] + (["seconds"] if timing else []))
        for r in self.rows:
            line = [_fmt(r.cell.get(c, "")) for c in cols]
            line += [r.metric, _fmt(r.estimate), _fmt(r.ci_lo), _fmt(r.ci_hi), str(r.trials)]
            if timing:
                line.append(f"{r.seconds:.3f}")
            writer.writerow(line)
        return buf.getvalue()


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(round(value, 12))
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return str(value)


# ---------------------------------------------------------------------------
# Parallel execution
# ---------------------------------------------------------------------------


def parallel_map(fn: Callable[[Any], Any], tasks: list[Any], workers: int = 1) -> list[Any]:
    """Ordered map over ``tasks``; forked worker processes when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


_KEY_CACHE: dict[tuple, tuple[ZeroBitScheme, Any, Any]] = {}


def _spec_scheme(spec: dict) -> ZeroBitScheme:
    return make_scheme(spec["scheme"], spec["params"], spec.get("amplify"))


def _keyed(spec: dict, seed: int, key_stream: tuple) -> tuple[ZeroBitScheme, Any, Any]:
    """Scheme and key for a key block, cached per process."""
    ident = (json.dumps(spec, sort_keys=True), seed, key_stream)
    if ident not in _KEY_CACHE:
        if len(_KEY_CACHE) >= 2:
            _KEY_CACHE.pop(next(iter(_KEY_CACHE)))
        scheme = _spec_scheme(spec)
        sk, pk = scheme.keygen(RngStream(seed, key_stream).generator())
        _KEY_CACHE[ident] = (scheme, sk, pk)
    return _KEY_CACHE[ident]


def _split(total: int, parts: int) -> list[int]:
    return [total // parts + (i < total % parts) for i in range(parts)]


def _chunked(total: int, chunk: int) -> list[int]:
    return [min(chunk, total - lo) for lo in range(0, total, chunk)]


def _key_tasks(cfg: ExperimentConfig, cell_id: int, payload: dict, total: int | None = None) -> list[dict]:
    """Tasks covering ``total`` trials: ``keys`` key blocks, each cut into fixed chunks."""
    total = cfg.trials if total is None else total
    tasks = []
    for k, share in enumerate(_split(total, cfg.keys)):
        for c, size in enumerate(_chunked(share, cfg.chunk)):
            tasks.append({**payload, "seed": cfg.seed, "key_stream": (cell_id, 1, k), "stream": (cell_id, 2, k, c), "count": size, "key_index": k})
    return tasks


def _task_rng(task: dict) -> np.random.Generator:
    return RngStream(task["seed"], tuple(task["stream"])).generator()


# ---------------------------------------------------------------------------
# Task bodies (top-level so worker processes can run them)
# ---------------------------------------------------------------------------


def _task_decode(task: dict) -> int:
    scheme, sk, pk = _keyed(task["spec"], task["seed"], task["key_stream"])
    channel = None if task["channel"] is None else ChannelSpec.from_json(task["channel"])
    est = count_decodes(scheme, sk, pk, channel, task["count"], _task_rng(task), random_input=task.get("random", False))
    return est.successes


def pattern_rows(name: str, length: int, header: int, count: int, rng: np.random.Generator, positions: np.ndarray | None = None) -> np.ndarray:
    """Corpus strings restricted to ``positions``; ``random`` rows are fresh per row."""
    width = length if positions is None else positions.size
    if name == "random":
        return uniform_bits((count, width), rng)
    idx = np.arange(length)
    if name == "zeros":
        full = np.zeros(length, np.uint8)
    elif name == "ones":
        full = np.ones(length, np.uint8)
    elif name == "alternating":
        full = (idx & 1).astype(np.uint8)
    elif name == "pairs":
        full = ((idx >> 1) & 1).astype(np.uint8)
    elif name == "half":
        full = (idx >= length // 2).astype(np.uint8)
    elif name in ("balanced-header-zeros", "balanced-header-ones"):
        full = np.full(length, 1 if name.endswith("ones") else 0, np.uint8)
        full[:header] = idx[:header] & 1
    else:
        raise ConfigError(f"unknown corpus member {name!r}")
    row = full if positions is None else full[positions]
    return np.broadcast_to(row, (count, width)).copy()


def _task_soundness(task: dict) -> list[int]:
    """BOT counts per corpus member; trial ``i`` of the chunk uses member ``(offset + i) mod |corpus|``."""
    scheme, sk, pk = _keyed(task["spec"], task["seed"], task["key_stream"])
    rng = _task_rng(task)
    corpus = task["corpus"]
    positions = scheme.read_set(sk)
    length, header = scheme.codeword_length(), scheme.security_parameter()
    members = (task["offset"] + np.arange(task["count"])) % len(corpus)
    bots = []
    for j, name in enumerate(corpus):
        size = int((members == j).sum())
        if size == 0:
            bots.append(0)
            continue
        X = pattern_rows(name, length, header, size, rng, positions)
        bots.append(int((~scheme.decode_batch(sk, X, positions=positions)).sum()))
    return bots


def _task_fresh_soundness(task: dict) -> list[int]:
    """Soundness with a fresh key for every trial (one corpus member each)."""
    scheme = _spec_scheme(task["spec"])
    rng = _task_rng(task)
    corpus = task["corpus"]
    length, header = scheme.codeword_length(), scheme.security_parameter()
    bots = [0] * len(corpus)
    for i in range(task["count"]):
        j = (task["offset"] + i) % len(corpus)
        sk, _ = scheme.keygen(rng)
        X = pattern_rows(corpus[j], length, header, 1, rng)
        bots[j] += int(not scheme.decode_batch(sk, X)[0])
    return bots


def _task_tag_match(task: dict) -> int:
    scheme, sk, pk = _keyed(task["spec"], task["seed"], task["key_stream"])
    rng = _task_rng(task)
    channel = ChannelSpec.from_json(task["channel"]) if task["channel"] else None
    tags = task["count"]
    words = -(-tags // sk.kprime)
    X = scheme.encode_batch(pk, words, rng)
    if channel is not None:
        X = corrupt_batch(channel, X, rng)
    return int(tag_matches(sk, X).ravel()[:tags].sum())


def _task_rank(task: dict) -> tuple[int, int]:
    scheme = _spec_scheme(task["spec"])
    rng = _task_rng(task)
    n, m = scheme.params.n, scheme.params.m
    mode = task.get("mode", "full")
    planted = uniform = 0
    for _ in range(task["count"]):
        _, G = scheme.keygen(rng)
        planted += rank_attack(G, mode, rng=rng) is Verdict.PLANTED
        uniform += rank_attack(uniform_matrix(n, m, rng), mode, rng=rng) is Verdict.PLANTED
    return planted, uniform


def _task_marginal(task: dict) -> tuple[list[int], list[int]]:
    model = parse_model(task["model"])
    rng = _task_rng(task)
    n, count = task["n"], task["count"]
    plain = generate_plain_batch(model, task["prompt"], count, n, rng)
    seeds = uniform_bits((count, n), rng)
    seeded = generate_seeded_batch(model, task["prompt"], seeds, rng)
    return output_histogram(plain).tolist(), output_histogram(seeded).tolist()


def _task_watermark(task: dict) -> tuple[int, int]:
    scheme, sk, pk = _keyed(task["spec"], task["seed"], task["key_stream"])
    model = parse_model(task["model"])
    return watermark_rates(model, task["prompt"], scheme, sk, pk, task["count"], _task_rng(task), task.get("extra_flip", 0.0))


def _task_distinguish(task: dict) -> dict[str, list[int]]:
    scheme, sk, pk = _keyed(task["spec"], task["seed"], task["key_stream"])
    tests = make_tests(scheme, sk, pk, RngStream(task["seed"], tuple(task["test_stream"])).generator(), task["cheat"])
    rng = _task_rng(task)
    L = scheme.codeword_length()
    counts = {name: [0, 0] for name, _ in tests}
    step = max(1, (1 << 22) // L)
    for size in _chunked(task["count"], step):
        C = scheme.encode_batch(pk, size, rng)
        U = uniform_bits((size, L), rng)
        for name, fn in tests:
            counts[name][0] += int(fn(C).sum())
            counts[name][1] += int(fn(U).sum())
    return counts


# ---------------------------------------------------------------------------
# Distinguishers
# ---------------------------------------------------------------------------


def make_tests(scheme: ZeroBitScheme, sk: Any, pk: Any, rng: np.random.Generator, cheat: bool = False) -> list[tuple[str, Callable[[np.ndarray], np.ndarray]]]:
    """Binary statistics on whole strings; parameters are drawn once from ``rng``."""
    L = scheme.codeword_length()
    half = L // 2
    subset = np.sort(rng.choice(L, size=min(8, L), replace=False))
    tests: list[tuple[str, Callable[[np.ndarray], np.ndarray]]] = [
        ("bit-frequency", lambda X: X.sum(axis=1, dtype=np.int64) > half),
        ("pairwise-correlation", lambda X: (X[:, 1:] == X[:, :-1]).sum(axis=1, dtype=np.int64) > (L - 1) // 2),
        ("random-subset-xor", lambda X: (X[:, subset].sum(axis=1) & 1) == 1),
    ]
    base = scheme.base if isinstance(scheme, AmplifiedScheme) else scheme
    if isinstance(base, WeakXorScheme) and not isinstance(scheme, AmplifiedScheme) and base.params.n > base.params.m:
        y = f2_left_kernel_vector(pk.dense())
        if y is not None:
            support = np.flatnonzero(y)
            tests.append(("public-structure-parity", lambda X: (X[:, support].sum(axis=1) & 1) == 0))
    if cheat:
        tests.append(("secret-key-parity", lambda X: scheme.decode_batch(sk, X)))
    return tests


def difference_ci(a: int, b: int, q: int, confidence: float = 0.99) -> tuple[float, float, float]:
    """Signed difference of two proportions over ``q`` samples each, with a normal CI radius."""
    p1, p2 = a / q, b / q
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    radius = z * math.sqrt(p1 * (1 - p1) / q + p2 * (1 - p2) / q)
    return p1 - p2, p1 - p2 - radius, p1 - p2 + radius


@dataclass(frozen=True)
class Advantage:
    test: str
    hits_code: int
    hits_uniform: int
    samples: int

    @property
    def signed(self) -> float:
        return difference_ci(self.hits_code, self.hits_uniform, self.samples)[0]

    @property
    def ci(self) -> tuple[float, float]:
        _, lo, hi = difference_ci(self.hits_code, self.hits_uniform, self.samples)
        return lo, hi

    @property
    def advantage(self) -> float:
        return abs(self.signed)

    @property
    def consistent_with_zero(self) -> bool:
        lo, hi = self.ci
        return lo <= 0.0 <= hi


def distinguisher_suite(scheme: ZeroBitScheme, q: int, rng: np.random.Generator, *, cheat: bool = False, rank_keys: int = 0, key: tuple | None = None) -> list[Advantage]:
    """Advantage of every applicable test between ``q`` codewords (one key) and ``q`` uniform strings."""
    if q < 100:
        raise ParameterError("q must be at least 100")
    sk, pk = key if key is not None else scheme.keygen(rng)
    tests = make_tests(scheme, sk, pk, rng, cheat)
    L = scheme.codeword_length()
    counts = {name: [0, 0] for name, _ in tests}
    for size in _chunked(q, max(1, (1 << 22) // L)):
        C, U = scheme.encode_batch(pk, size, rng), uniform_bits((size, L), rng)
        for name, fn in tests:
            counts[name][0] += int(fn(C).sum())
            counts[name][1] += int(fn(U).sum())
    out = [Advantage(name, a, b, q) for name, (a, b) in counts.items()]
    if rank_keys and isinstance(scheme, WeakXorScheme) and scheme.params.n <= scheme.params.m:
        planted = uniform = 0
        for _ in range(rank_keys):
            _, G = scheme.keygen(rng)
            planted += rank_attack(G) is Verdict.PLANTED
            uniform += rank_attack(uniform_matrix(scheme.params.n, scheme.params.m, rng)) is Verdict.PLANTED
        out.append(Advantage("rank-attack", planted, uniform, rank_keys))
    return out


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------


def _base_spec(cfg: ExperimentConfig) -> dict:
    return {"scheme": cfg.scheme, "params": dict(cfg.params), "amplify": None}


def resolve_spec(cfg: ExperimentConfig, cell_id: int) -> tuple[dict, list[tuple[str, Any]]]:
    """Scheme spec with amplification resolved; calibrates alpha, delta when asked.

    ``amplify`` is either explicit ``{"t", "alpha", "delta"}`` or
    ``{"calibrate": trials, "channel": {...}, "failure": 0.01}`` where
    ``t`` may also be fixed explicitly.
    """
    spec = _base_spec(cfg)
    amp = cfg.amplify
    extras: list[tuple[str, Any]] = []
    if not amp:
        return spec, extras
    if "calibrate" in amp:
        base = make_base(cfg.scheme, cfg.params)
        channel = ChannelSpec.from_json(amp["channel"]) if amp.get("channel") else None
        rng = RngStream(cfg.seed, (cell_id, 0)).generator()
        cal = calibrate_alpha_delta(base, channel, int(amp["calibrate"]), rng, keys=int(amp.get("keys", 1)))
        alpha, delta = cal.alpha.rate, cal.delta.rate
        t = int(amp["t"]) if "t" in amp else chernoff_repetitions(alpha, delta, float(amp.get("failure", 0.01)))
        extras += [("alpha", cal.alpha), ("delta", cal.delta)]
    else:
        alpha, delta, t = float(amp["alpha"]), float(amp["delta"]), int(amp["t"])
    spec["amplify"] = {"t": t, "alpha": alpha, "delta": delta}
    extras.append(("t", t))
    extras.append(("theta", _spec_scheme(spec).theta))
    return spec, extras


def _extra_rows(cell: dict, extras: list[tuple[str, Any]]) -> list[Row]:
    rows = []
    for name, value in extras:
        if isinstance(value, Estimate):
            rows.append(Row.proportion(cell, f"calibrated_{name}", value))
        else:
            rows.append(Row.exact(cell, name, value, 1))
    return rows


def _run_decode(cfg, cell_id, cell, workers):
    spec, extras = resolve_spec(cfg, cell_id)
    random_input = bool(cfg.options.get("random_input", False))
    tasks = _key_tasks(cfg, cell_id, {"spec": spec, "channel": cfg.channel, "random": random_input})
    counts = parallel_map(_task_decode, tasks, workers)
    rows = _extra_rows(cell, extras)
    rows.append(Row.proportion(cell, "one_rate", Estimate(sum(counts), cfg.trials)))
    if 1 < cfg.keys <= 64:
        per_key = [0] * cfg.keys
        for task, c in zip(tasks, counts):
            per_key[task["key_index"]] += c
        for k, (ones, size) in enumerate(zip(per_key, _split(cfg.trials, cfg.keys))):
            if size:
                rows.append(Row.proportion({**cell, "key": k}, "one_rate", Estimate(ones, size)))
    return rows


def _run_soundness(cfg, cell_id, cell, workers):
    spec, extras = resolve_spec(cfg, cell_id)
    corpus = list(cfg.options.get("corpus", CORPUS))
    fresh = bool(cfg.options.get("fresh_keys", False))
    if fresh:
        tasks = []
        offset = 0
        for c, size in enumerate(_chunked(cfg.trials, cfg.chunk)):
            tasks.append({"spec": spec, "seed": cfg.seed, "stream": (cell_id, 3, c), "count": size, "corpus": corpus, "offset": offset})
            offset += size
        results = parallel_map(_task_fresh_soundness, tasks, workers)
    else:
        tasks = _key_tasks(cfg, cell_id, {"spec": spec, "corpus": corpus})
        offset = 0
        for task in tasks:
            task["offset"] = offset
            offset += task["count"]
        results = parallel_map(_task_soundness, tasks, workers)
    per_member = np.sum(np.asarray(results, dtype=np.int64), axis=0)
    sizes = np.bincount(np.arange(cfg.trials) % len(corpus), minlength=len(corpus))
    rows = _extra_rows(cell, extras)
    rows.append(Row.proportion({**cell, "member": "all"}, "bot_rate", Estimate(int(per_member.sum()), cfg.trials)))
    for name, bots, size in zip(corpus, per_member, sizes):
        if size:
            rows.append(Row.proportion({**cell, "member": name}, "bot_rate", Estimate(int(bots), int(size))))
    return rows


def _run_calibrate(cfg, cell_id, cell, workers):
    spec = _base_spec(cfg)
    alpha_tasks = _key_tasks(cfg, cell_id, {"spec": spec, "channel": cfg.channel, "random": False})
    delta_tasks = [{**t, "random": True, "stream": t["stream"] + (1,)} for t in alpha_tasks]
    counts = parallel_map(_task_decode, alpha_tasks + delta_tasks, workers)
    alpha = Estimate(sum(counts[: len(alpha_tasks)]), cfg.trials)
    delta = Estimate(sum(counts[len(alpha_tasks) :]), cfg.trials)
    rows = [Row.proportion(cell, "alpha", alpha), Row.proportion(cell, "delta", delta)]
    if alpha.rate > delta.rate:
        failure = float(cfg.options.get("failure", 0.01))
        rows.append(Row.exact(cell, "t_required", chernoff_repetitions(alpha.rate, delta.rate, failure), cfg.trials))
    return rows


def _run_distinguish(cfg, cell_id, cell, workers):
    spec, extras = resolve_spec(cfg, cell_id)
    cheat = bool(cfg.options.get("cheat", False))
    tasks = _key_tasks(replace(cfg, keys=1), cell_id, {"spec": spec, "cheat": cheat, "test_stream": (cell_id, 4)})
    results = parallel_map(_task_distinguish, tasks, workers)
    totals: dict[str, list[int]] = {}
    for res in results:
        for name, (a, b) in res.items():
            acc = totals.setdefault(name, [0, 0])
            acc[0] += a
            acc[1] += b
    rows = _extra_rows(cell, extras)
    for name, (a, b) in totals.items():
        adv = Advantage(name, a, b, cfg.trials)
        lo, hi = adv.ci
        rows.append(Row({**cell, "test": name}, "signed_advantage", adv.signed, max(-1.0, lo), min(1.0, hi), cfg.trials))
    rank_keys = int(cfg.options.get("rank_keys", 0))
    if rank_keys and cfg.scheme == "weakxor" and not cfg.amplify:
        tasks = [{"spec": spec, "seed": cfg.seed, "stream": (cell_id, 5, c), "count": size} for c, size in enumerate(_chunked(rank_keys, 50))]
        res = parallel_map(_task_rank, tasks, workers)
        adv = Advantage("rank-attack", sum(r[0] for r in res), sum(r[1] for r in res), rank_keys)
        lo, hi = adv.ci
        rows.append(Row({**cell, "test": "rank-attack"}, "signed_advantage", adv.signed, max(-1.0, lo), min(1.0, hi), rank_keys))
    return rows


def _run_tag_match(cfg, cell_id, cell, workers):
    if cfg.scheme != "ssr":
        raise ConfigError("tag-match experiments need the ssr scheme")
    spec = _base_spec(cfg)
    tasks = _key_tasks(cfg, cell_id, {"spec": spec, "channel": cfg.channel})
    matches = sum(parallel_map(_task_tag_match, tasks, workers))
    scheme = make_base(cfg.scheme, cfg.params)
    rows = [Row.proportion(cell, "tag_match", Estimate(matches, cfg.trials))]
    p = float(cfg.channel["p"]) if cfg.channel and cfg.channel.get("kind") == "bsc" else 0.0
    rows.append(Row.exact(cell, "expected", ssr_expected_tag_match(scheme.params.eps, p, scheme.params.ell), cfg.trials))
    return rows


def _run_rank(cfg, cell_id, cell, workers):
    spec = _base_spec(cfg)
    mode = cfg.options.get("mode", "full")
    tasks = [{"spec": spec, "seed": cfg.seed, "stream": (cell_id, 5, c), "count": size, "mode": mode} for c, size in enumerate(_chunked(cfg.trials, 50))]
    res = parallel_map(_task_rank, tasks, workers)
    planted, uniform = sum(r[0] for r in res), sum(r[1] for r in res)
    adv = Advantage("rank-attack", planted, uniform, cfg.trials)
    lo, hi = adv.ci
    return [
        Row.proportion(cell, "planted_detected", Estimate(planted, cfg.trials)),
        Row.proportion(cell, "uniform_detected", Estimate(uniform, cfg.trials)),
        Row(cell, "advantage", adv.signed, max(-1.0, lo), min(1.0, hi), cfg.trials),
    ]


def parity_oracle_sweep(max_population: int) -> list[dict[str, Any]]:
    """Exact even-parity probability against the two-sided bound for every ``t <= K <= N``."""
    out = []
    for N in range(1, max_population + 1):
        for K in range(0, N + 1):
            for t in range(0, K + 1):
                spec = HypSpec(N, K, t)
                exact = hypergeom_even_parity_exact(spec)
                lo, hi = hypergeom_even_parity_bounds(spec)
                out.append({"N": N, "K": K, "t": t, "exact": exact, "lower": lo, "upper": hi, "inside": lo - 1e-12 <= exact <= hi + 1e-12})
    return out


def _run_parity_oracle(cfg, cell_id, cell, workers):
    sweep = parity_oracle_sweep(int(cfg.options.get("max_population", 30)))
    inside = sum(r["inside"] for r in sweep)
    rows = [Row.exact(cell, "inside_fraction", inside / len(sweep), len(sweep)), Row.exact(cell, "violations", len(sweep) - inside, len(sweep))]
    worst = min(sweep, key=lambda r: min(r["exact"] - r["lower"], r["upper"] - r["exact"]))
    margin = min(worst["exact"] - worst["lower"], worst["upper"] - worst["exact"])
    rows.append(Row.exact({**cell, "N": worst["N"], "K": worst["K"], "t": worst["t"]}, "worst_margin", margin, len(sweep)))
    return rows


def _run_marginal(cfg, cell_id, cell, workers):
    model_spec = cfg.options.get("model", "constant:p=0.3")
    n = int(cfg.options.get("n", 8))
    prompt = cfg.options.get("prompt", "")
    tasks = [
        {"model": model_spec, "n": n, "prompt": prompt, "seed": cfg.seed, "stream": (cell_id, 6, c), "count": size}
        for c, size in enumerate(_chunked(cfg.trials, cfg.chunk))
    ]
    res = parallel_map(_task_marginal, tasks, workers)
    plain = np.sum([r[0] for r in res], axis=0)
    seeded = np.sum([r[1] for r in res], axis=0)
    cell = {**cell, "model": model_spec}
    dist = exact_output_distribution(parse_model(model_spec), prompt, n)
    return [
        Row.exact(cell, "tv_plain_vs_seeded", total_variation(plain, seeded), cfg.trials),
        Row.exact(cell, "tv_plain_vs_exact", total_variation(plain, dist), cfg.trials),
        Row.exact(cell, "tv_seeded_vs_exact", total_variation(seeded, dist), cfg.trials),
        Row.exact(cell, "tv_null_expected", expected_null_tv(dist, cfg.trials), cfg.trials),
    ]


def _run_watermark(cfg, cell_id, cell, workers):
    spec, extras = resolve_spec(cfg, cell_id)
    payload = {
        "spec": spec,
        "model": cfg.options.get("model", "sinusoidal:amplitude=0.1"),
        "prompt": cfg.options.get("prompt", ""),
        "extra_flip": float(cfg.options.get("extra_flip", 0.0)),
    }
    res = parallel_map(_task_watermark, _key_tasks(cfg, cell_id, payload), workers)
    rows = _extra_rows(cell, extras)
    rows.append(Row.proportion(cell, "detect_one_rate", Estimate(sum(r[0] for r in res), cfg.trials)))
    rows.append(Row.proportion(cell, "plain_bot_rate", Estimate(sum(r[1] for r in res), cfg.trials)))
    return rows


_RUNNERS = {
    "decode": _run_decode,
    "soundness": _run_soundness,
    "calibrate": _run_calibrate,
    "distinguish": _run_distinguish,
    "tag-match": _run_tag_match,
    "rank-attack": _run_rank,
    "parity-oracle": _run_parity_oracle,
    "marginal": _run_marginal,
    "watermark": _run_watermark,
}


def run_report(cfg: ExperimentConfig, workers: int | None = None) -> TrialReport:
    """Evaluate every sweep cell and assemble the report (no files written)."""
    workers = cfg.workers if workers is None else workers
    rows: list[Row] = []
    started = time.perf_counter()
    for cell_id, (cell, resolved) in enumerate(cfg.cells()):
        t0 = time.perf_counter()
        cell_rows = _RUNNERS[cfg.kind](resolved, cell_id, cell, workers)
        elapsed = time.perf_counter() - t0
        rows += [replace(r, seconds=elapsed) for r in cell_rows]
    meta = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_json(),
        "workers": workers,
        "seconds": round(time.perf_counter() - started, 3),
    }
    return TrialReport(rows, meta)


def estimate_decode_rate(cfg: ExperimentConfig) -> TrialReport:
    return run_report(replace(cfg, kind="decode"))


def estimate_soundness(cfg: ExperimentConfig) -> TrialReport:
    return run_report(replace(cfg, kind="soundness"))


def run_experiment(cfg: ExperimentConfig, out: str | Path, *, timing: bool = False, workers: int | None = None) -> TrialReport:
    """Write ``out`` (CSV, one row per cell and metric) and ``out`` + ``.json`` metadata.

    The CSV omits wall time unless ``timing`` is set, so reruns are byte-identical.
    """
    report = run_report(cfg, workers)
    out = Path(out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_csv(timing))
        meta = {**report.metadata, "row_seconds": [round(r.seconds, 3) for r in report.rows]}
        Path(str(out) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    return report


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return ExperimentConfig.from_json(obj)


def wilson_coverage(p: float, trials: int, repeats: int, rng: np.random.Generator, confidence: float = 0.99) -> float:
    """Fraction of Wilson intervals covering ``p`` over synthetic binomial draws."""
    draws = rng.binomial(trials, p, size=repeats)
    hits = 0
    for k in draws:
        lo, hi = wilson_interval(int(k), trials, confidence)
        hits += lo <= p <= hi
    return hits / repeats


def iter_rows(reports: Iterable[TrialReport]) -> Iterable[Row]:
    for rep in reports:
        yield from rep.rows
