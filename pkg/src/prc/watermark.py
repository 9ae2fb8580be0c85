"""Toy binary language models with PRC-seeded watermarking.

A model maps ``(prompt, prefix)`` to the probability that the next token is
1.  Seeded generation replaces the model's coin with a bit correlated to a
seed bit ``x_i`` while keeping ``z_i ~ Ber(p_i)`` when ``x_i`` is uniform:

* ``p <= 1/2``: ``z = 1`` only if ``x = 1``, then with probability ``2p``;
* ``p > 1/2``: ``z = 1`` if ``x = 1``, otherwise with probability ``2p - 1``.

Planting a PRC codeword as the seed lets the key holder detect the output.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from prc.bits import BitString, uniform_bits
from prc.core import Decoding, ZeroBitScheme, check_positions
from prc.errors import ConfigError, LengthError, ParameterError


class ToyModel(Protocol):
    name: str

    def next_prob(self, prompt: bytes, prefix: np.ndarray) -> float: ...


@dataclass(frozen=True)
class ConstantModel:
    """Every token is 1 with probability ``p``."""

    p: float
    name: str = "constant"

    def __post_init__(self) -> None:
        _check_p(self.p)

    def next_prob(self, prompt: bytes, prefix: np.ndarray) -> float:
        return self.p

    def probs(self, prompt: bytes, n: int) -> np.ndarray:
        return np.full(n, self.p)


@dataclass(frozen=True)
class SinusoidalModel:
    """``p_i = center + amplitude * sin(2 pi i / period + phase)``, clipped to [0, 1]."""

    center: float = 0.5
    amplitude: float = 0.1
    period: float = 16.0
    phase: float = 0.0
    name: str = "sinusoidal"

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ParameterError("period must be positive")

    def probs(self, prompt: bytes, n: int) -> np.ndarray:
        i = np.arange(n)
        return np.clip(self.center + self.amplitude * np.sin(2 * np.pi * i / self.period + self.phase), 0.0, 1.0)

    def next_prob(self, prompt: bytes, prefix: np.ndarray) -> float:
        return float(self.probs(prompt, len(prefix) + 1)[-1])


@dataclass(frozen=True)
class HashModel:
    """Probability drawn from ``[low, high]`` by hashing the prompt and prefix.

    Gives reproducible, prefix-dependent "texts".
    """

    low: float = 0.1
    high: float = 0.9
    name: str = "hash"

    def __post_init__(self) -> None:
        _check_p(self.low)
        _check_p(self.high)
        if self.low > self.high:
            raise ParameterError("low must not exceed high")

    def next_prob(self, prompt: bytes, prefix: np.ndarray) -> float:
        bits = np.asarray(prefix, dtype=np.uint8)
        digest = hashlib.sha256(prompt + b"\x00" + len(bits).to_bytes(8, "big") + np.packbits(bits).tobytes()).digest()
        u = int.from_bytes(digest[:8], "big") / 2**64
        return self.low + (self.high - self.low) * u


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ParameterError(f"model probability must lie in [0, 1], got {p!r}")


def parse_model(spec: str) -> ToyModel:
    """``constant:p=0.3``, ``sinusoidal:amplitude=0.1,period=16`` or ``hash``."""
    name, _, rest = spec.partition(":")
    kwargs: dict[str, float] = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"model option {item!r} is not key=value")
        kwargs[key.strip()] = float(value)
    models = {"constant": ConstantModel, "sinusoidal": SinusoidalModel, "hash": HashModel}
    if name not in models:
        raise ConfigError(f"unknown model {name!r}; expected one of {sorted(models)}")
    try:
        return models[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad options for model {name}: {exc}") from exc


def position_probs(model: ToyModel, prompt: bytes, n: int) -> np.ndarray | None:
    """Per-position probabilities for prefix-independent models, else ``None``."""
    probs = getattr(model, "probs", None)
    if probs is None:
        return None
    p = np.asarray(probs(prompt, n), dtype=float)
    if np.any((p < 0) | (p > 1)) or np.isnan(p).any():
        raise ParameterError("model returned a probability outside [0, 1]")
    return p


# ---------------------------------------------------------------------------
# Sampling rules
# ---------------------------------------------------------------------------


def plain_bits(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (r < p).astype(np.uint8)


def seeded_bits(p: np.ndarray, x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Seeded token rule on arrays; ``r`` are uniform coins in [0, 1)."""
    x = np.asarray(x, dtype=np.uint8)
    low = x & (r < 2 * p)
    high = x | (r < 2 * p - 1)
    return np.where(p <= 0.5, low, high).astype(np.uint8)


def _sequential(model: ToyModel, prompt: bytes, r: np.ndarray, x: np.ndarray | None) -> np.ndarray:
    z = np.zeros(r.size, dtype=np.uint8)
    for i in range(r.size):
        p = model.next_prob(prompt, z[:i])
        _check_p(p)
        pi = np.array([p])
        z[i] = plain_bits(pi, r[i : i + 1])[0] if x is None else seeded_bits(pi, x[i : i + 1], r[i : i + 1])[0]
    return z


def generate_plain(model: ToyModel, prompt: bytes | str, n: int, rng: np.random.Generator) -> BitString:
    """``z_i ~ Ber(p_i)`` token by token."""
    if n < 1:
        raise ParameterError("n must be positive")
    prompt = _as_bytes(prompt)
    r = rng.random(n)
    p = position_probs(model, prompt, n)
    z = _sequential(model, prompt, r, None) if p is None else plain_bits(p, r)
    return BitString.from_bits(z)


def generate_seeded(model: ToyModel, prompt: bytes | str, x: BitString, rng: np.random.Generator) -> BitString:
    """Tokens correlated with the seed ``x``; marginally ``Ber(p_i)`` for uniform ``x``."""
    n = len(x)
    if n < 1:
        raise LengthError("seed must be non-empty")
    prompt = _as_bytes(prompt)
    r = rng.random(n)
    p = position_probs(model, prompt, n)
    xs = x.to_array()
    z = _sequential(model, prompt, r, xs) if p is None else seeded_bits(p, xs, r)
    return BitString.from_bits(z)


def _as_bytes(prompt: bytes | str) -> bytes:
    return prompt.encode() if isinstance(prompt, str) else bytes(prompt)


def generate_plain_batch(
    model: ToyModel, prompt: bytes | str, count: int, n: int, rng: np.random.Generator, positions: np.ndarray | None = None
) -> np.ndarray:
    """``count`` plain outputs as rows; ``positions`` needs a prefix-independent model."""
    prompt = _as_bytes(prompt)
    positions = check_positions(positions, n)
    p = position_probs(model, prompt, n)
    if p is None:
        if positions is not None:
            raise ParameterError("projected generation needs a prefix-independent model")
        return np.stack([_sequential(model, prompt, rng.random(n), None) for _ in range(count)]) if count else np.zeros((0, n), np.uint8)
    if positions is not None:
        p = p[positions]
    return plain_bits(p[None, :], rng.random((count, p.size)))


def generate_seeded_batch(
    model: ToyModel, prompt: bytes | str, X: np.ndarray, rng: np.random.Generator, positions: np.ndarray | None = None, n: int | None = None
) -> np.ndarray:
    """Seeded outputs for every seed row of ``X`` (optionally projected)."""
    prompt = _as_bytes(prompt)
    X = np.asarray(X, dtype=np.uint8)
    n = X.shape[1] if n is None else n
    positions = check_positions(positions, n)
    p = position_probs(model, prompt, n)
    if p is None:
        if positions is not None:
            raise ParameterError("projected generation needs a prefix-independent model")
        return np.stack([_sequential(model, prompt, rng.random(n), row) for row in X]) if len(X) else X.copy()
    if positions is not None:
        p = p[positions]
    return seeded_bits(p[None, :], X, rng.random(X.shape))


def seeded_disagreement(p: float) -> float:
    """``Pr[z != x]`` for uniform ``x``: ``|p - 1/2|``."""
    _check_p(p)
    return abs(p - 0.5)


# ---------------------------------------------------------------------------
# Records and detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationRecord:
    prompt: str
    z: BitString
    x: BitString | None = None
    model: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.x is not None and len(self.x) != len(self.z):
            raise LengthError("seed and output lengths differ")

    @property
    def watermarked(self) -> bool:
        return self.x is not None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"prompt": self.prompt, "model": self.model, "z": self.z.to_json()}
        out["x"] = None if self.x is None else self.x.to_json()
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> GenerationRecord:
        x = obj.get("x")
        return cls(
            obj["prompt"],
            BitString.from_json(obj["z"]),
            None if x is None else BitString.from_json(x),
            obj.get("model", ""),
            obj.get("meta", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def generate_watermarked(
    model: ToyModel, prompt: str, scheme: ZeroBitScheme, pk: Any, rng: np.random.Generator
) -> GenerationRecord:
    """Seed the model with a fresh codeword; the output length is the codeword length."""
    x = scheme.encode(pk, rng)
    z = generate_seeded(model, prompt, x, rng)
    return GenerationRecord(prompt, z, x, getattr(model, "name", ""))


def generate_unwatermarked(model: ToyModel, prompt: str, n: int, rng: np.random.Generator) -> GenerationRecord:
    return GenerationRecord(prompt, generate_plain(model, prompt, n, rng), None, getattr(model, "name", ""))


def detect(scheme: ZeroBitScheme, sk: Any, z: BitString) -> Decoding:
    if len(z) != scheme.codeword_length():
        raise LengthError(f"text has {len(z)} tokens, scheme expects {scheme.codeword_length()}")
    return scheme.decode(sk, z)


def watermark_rates(
    model: ToyModel,
    prompt: str,
    scheme: ZeroBitScheme,
    sk: Any,
    pk: Any,
    count: int,
    rng: np.random.Generator,
    extra_flip: float = 0.0,
) -> tuple[int, int]:
    """``(ONE on watermarked, BOT on plain)`` counts over ``count`` records each.

    Prefix-independent models are simulated on the decoder's read set only.
    ``extra_flip`` applies a further BSC to watermarked outputs.
    """
    n = scheme.codeword_length()
    positions = scheme.read_set(sk) if position_probs(model, _as_bytes(prompt), 1) is not None else None
    X = scheme.encode_batch(pk, count, rng, positions=positions)
    Z = generate_seeded_batch(model, prompt, X, rng, positions=positions, n=n)
    if extra_flip:
        Z = Z ^ (rng.random(Z.shape) < extra_flip).astype(np.uint8)
    ones = int(scheme.decode_batch(sk, Z, positions=positions).sum())
    plain = generate_plain_batch(model, prompt, count, n, rng, positions=positions)
    bots = int((~scheme.decode_batch(sk, plain, positions=positions)).sum())
    return ones, bots


def output_histogram(Z: np.ndarray) -> np.ndarray:
    """Counts of each length-``n`` output (``n <= 20``), index = bits read MSB first."""
    Z = np.asarray(Z, dtype=np.int64)
    n = Z.shape[1]
    if n > 20:
        raise ParameterError("histogram limited to n <= 20")
    codes = Z @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    return np.bincount(codes, minlength=1 << n)


def total_variation(h1: np.ndarray, h2: np.ndarray) -> float:
    p, q = h1 / h1.sum(), h2 / h2.sum()
    return 0.5 * float(np.abs(p - q).sum())


def exact_output_distribution(model: ToyModel, prompt: bytes | str, n: int) -> np.ndarray:
    """Probability of every length-``n`` output under plain generation (``n <= 16``)."""
    if n > 16:
        raise ParameterError("exact distribution limited to n <= 16")
    prompt = _as_bytes(prompt)
    probs = np.ones(1)
    outputs = np.zeros((1, 0), dtype=np.uint8)
    for _ in range(n):
        p = np.array([model.next_prob(prompt, row) for row in outputs])
        probs = np.concatenate([probs * (1 - p), probs * p])
        outputs = np.concatenate(
            [np.hstack([outputs, np.zeros((len(outputs), 1), np.uint8)]), np.hstack([outputs, np.ones((len(outputs), 1), np.uint8)])]
        )
    codes = outputs.astype(np.int64) @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    dist = np.zeros(1 << n)
    dist[codes] = probs
    return dist


def expected_null_tv(dist: np.ndarray, samples: int) -> float:
    """Approximate mean TV between two independent ``samples``-size histograms of ``dist``.

    Each cell difference is roughly normal with variance ``2 p (1 - p) / N``,
    whose mean absolute value is ``sqrt(4 p (1 - p) / (pi N))``.
    """
    p = np.asarray(dist, dtype=float)
    return 0.5 * float(np.sqrt(4 * p * (1 - p) / (np.pi * samples)).sum())


def uniform_seeds(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return uniform_bits((count, n), rng)
