"""Error channels and budgeted adversaries.

Every channel works on a single :class:`BitString` and on batches of
``uint8`` rows.  The batch form also accepts a *projection*: ``X`` holds only
the coordinates ``positions`` of strings whose full length is ``length``, and
the channel is applied exactly in distribution to those coordinates.  This is
what lets the harness simulate long codewords while touching only the bits a
decoder reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from prc.bits import BitString, bernoulli_matrix, hamming_sphere_matrix, sample_subset
from prc.errors import ConfigError, ParameterError

STRATEGIES = ("random-flip", "prefix-burst", "parity-target")
KINDS = ("bsc", "hyp", "adv")


@dataclass(frozen=True)
class ChannelSpec:
    """Declarative channel description, parsed from CLI/JSON.

    ``hyp`` takes either an absolute flip count ``d`` or a ``rate`` (flip
    ``floor(rate * n)`` positions of a length-``n`` input).
    """

    kind: str
    p: float | None = None
    d: int | None = None
    rate: float | None = None
    strategy: str | None = None
    aux: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "bsc":
            if self.p is None or self.d is not None or self.rate is not None or self.strategy:
                raise ConfigError("bsc channel takes exactly 'p'")
            _prob(self.p)
        elif self.kind == "hyp":
            if (self.d is None) == (self.rate is None) or self.p is not None or self.strategy:
                raise ConfigError("hyp channel takes exactly one of 'd' or 'rate'")
            if self.d is not None and self.d < 0:
                raise ParameterError("d must be non-negative")
            if self.rate is not None:
                _prob(self.rate)
        else:
            if self.p is None or self.strategy is None or self.d is not None or self.rate is not None:
                raise ConfigError("adv channel takes 'p' and 'strategy'")
            if self.strategy not in STRATEGIES:
                raise ConfigError(f"unknown adversary strategy {self.strategy!r}")
            _prob(self.p)

    @classmethod
    def identity(cls) -> ChannelSpec:
        return cls("bsc", p=0.0)

    @classmethod
    def from_json(cls, obj: dict[str, Any] | str) -> ChannelSpec:
        if isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        kind = obj.pop("kind", None)
        aux = tuple(int(i) for i in obj.pop("aux", ()))
        unknown = set(obj) - {"p", "d", "rate", "strategy"}
        if unknown:
            raise ConfigError(f"unknown channel fields {sorted(unknown)}")
        return cls(kind, aux=aux, **obj)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for name in ("p", "d", "rate", "strategy"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.aux:
            out["aux"] = list(self.aux)
        return out

    def flips(self, n: int) -> int | None:
        """Exact flip count for length-``n`` inputs, or ``None`` for BSC."""
        if self.kind == "bsc":
            return None
        if self.kind == "hyp":
            d = self.d if self.d is not None else math.floor(self.rate * n)
            if d > n:
                raise ParameterError(f"cannot flip {d} of {n} bits")
            return d
        return budget(self.p, n)


def _prob(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability must lie in [0, 1], got {p}")


def budget(p: float, n: int) -> int:
    """Hard flip budget ``floor(p n)`` of a p-bounded adversary."""
    return math.floor(p * n + 1e-9)


# ---------------------------------------------------------------------------
# Single-string channels
# ---------------------------------------------------------------------------


def apply_bsc(x: BitString, p: float, rng: np.random.Generator) -> BitString:
    _prob(p)
    return x ^ BitString.from_bits(bernoulli_matrix(len(x), p, rng))


def apply_hypergeometric(x: BitString, d: int, rng: np.random.Generator) -> BitString:
    """Flip exactly ``d`` uniformly chosen positions."""
    if not 0 <= d <= len(x):
        raise ParameterError(f"cannot flip {d} of {len(x)} bits")
    return x.flip(sample_subset(len(x), d, rng))


def adversary_positions(n: int, p: float, strategy: str, aux=(), rng: np.random.Generator | None = None) -> np.ndarray:
    """Positions a budgeted adversary flips on a length-``n`` input."""
    k = budget(p, n)
    if strategy == "random-flip":
        if rng is None:
            raise ParameterError("random-flip needs an rng")
        return sample_subset(n, k, rng)
    if strategy == "prefix-burst":
        return np.arange(k)
    if strategy == "parity-target":
        targets = list(dict.fromkeys(int(i) for i in aux))
        if any(not 0 <= i < n for i in targets):
            raise ParameterError("parity-target positions out of range")
        return np.asarray(targets[:k], dtype=np.int64)
    raise ConfigError(f"unknown adversary strategy {strategy!r}")


def apply_bounded_adversary(x: BitString, p: float, strategy: str, aux=(), rng: np.random.Generator | None = None) -> BitString:
    """Flip at most ``floor(p n)`` bits according to ``strategy``.

    ``random-flip`` spends the budget on uniform positions, ``prefix-burst``
    on the first positions, ``parity-target`` on the guessed positions in
    ``aux`` (in the given order, truncated to the budget).
    """
    _prob(p)
    return x.flip(adversary_positions(len(x), p, strategy, aux, rng))


def apply_channel(spec: ChannelSpec, x: BitString, rng: np.random.Generator) -> BitString:
    if spec.kind == "bsc":
        return apply_bsc(x, spec.p, rng)
    if spec.kind == "hyp":
        return apply_hypergeometric(x, spec.flips(len(x)), rng)
    return apply_bounded_adversary(x, spec.p, spec.strategy, spec.aux, rng)


# ---------------------------------------------------------------------------
# Batches and projections
# ---------------------------------------------------------------------------


def projected_subset_flips(count: int, length: int, d: int, coords: int, rng: np.random.Generator) -> np.ndarray:
    """Restriction of a uniform ``d``-subset of ``range(length)`` to its first ``coords`` slots.

    The number of chosen slots landing among ``coords`` fixed coordinates is
    Hyp(length, coords, d); given that count the landing slots are a uniform
    subset.  Returns a ``(count, coords)`` 0/1 mask.
    """
    if not 0 <= d <= length or coords > length:
        raise ParameterError("invalid projected flip parameters")
    if coords == length:
        return hamming_sphere_matrix(count, length, d, rng)
    hits = rng.hypergeometric(coords, length - coords, d, size=count) if d else np.zeros(count, dtype=np.int64)
    out = np.zeros((count, coords), dtype=np.uint8)
    if coords == 0 or not hits.any():
        return out
    keys = rng.random((count, coords))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    out[:] = ranks < hits[:, None]
    return out


def corrupt_batch(
    spec: ChannelSpec,
    X: np.ndarray,
    rng: np.random.Generator,
    positions: np.ndarray | None = None,
    length: int | None = None,
) -> np.ndarray:
    """Apply ``spec`` independently to every row of ``X``.

    With ``positions`` given, row ``r`` of ``X`` is the projection of a
    length-``length`` string onto ``positions`` (sorted, distinct) and the
    result is the matching projection of the corrupted string.
    """
    X = np.asarray(X, dtype=np.uint8)
    count, width = X.shape
    if positions is None:
        length = width
        positions = np.arange(width)
    else:
        positions = np.asarray(positions, dtype=np.int64)
        if length is None or positions.shape != (width,):
            raise ParameterError("projection needs matching positions and the full length")
    if spec.kind == "bsc":
        return X ^ bernoulli_matrix((count, width), spec.p, rng)
    d = spec.flips(length)
    if spec.kind == "hyp" or spec.strategy == "random-flip":
        return X ^ projected_subset_flips(count, length, d, width, rng)
    hit = adversary_positions(length, spec.p, spec.strategy, spec.aux, rng)
    mask = np.isin(positions, hit).astype(np.uint8)
    return X ^ mask[None, :]
