"""Zero-bit scheme interface, estimation helpers and the amplification wrapper.

Schemes expose a batch API over ``uint8`` matrices.  ``encode_batch`` and
``decode_batch`` optionally take ``positions``: a sorted array of codeword
coordinates.  Encoding then returns only those columns (sampled exactly from
the marginal of the full codeword) and decoding reads only those columns.
Decoders touch few coordinates, so this projection makes long-codeword Monte
Carlo cheap without changing any distribution.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np
from scipy import stats

from prc.bits import BitString, make_rng, uniform_bits
from prc.channels import ChannelSpec, corrupt_batch
from prc.errors import LengthError, ParameterError, PreconditionError


class Decoding(enum.Enum):
    """Decoder output: ``ONE`` (the only message) or ``BOT``."""

    ONE = 1
    BOT = 0

    def __bool__(self) -> bool:
        return self is Decoding.ONE

    @classmethod
    def of(cls, flag: bool) -> Decoding:
        return cls.ONE if flag else cls.BOT


def locate(positions: np.ndarray, needed: np.ndarray) -> np.ndarray:
    """Column indices of ``needed`` coordinates inside sorted ``positions``."""
    positions = np.asarray(positions, dtype=np.int64)
    needed = np.asarray(needed, dtype=np.int64)
    idx = np.searchsorted(positions, needed)
    ok = idx < positions.size
    ok[ok] = positions[idx[ok]] == needed[ok]
    if not ok.all():
        raise ParameterError("projection does not cover the decoder's read set")
    return idx


def check_positions(positions: np.ndarray | None, length: int) -> np.ndarray | None:
    if positions is None:
        return None
    positions = np.asarray(positions, dtype=np.int64)
    if positions.ndim != 1 or (positions.size and (positions[0] < 0 or positions[-1] >= length)):
        raise ParameterError("positions out of range")
    if positions.size > 1 and np.any(np.diff(positions) <= 0):
        raise ParameterError("positions must be sorted and distinct")
    return positions


class ZeroBitScheme(ABC):
    """Common interface of every PRC in the package.

    ``sk`` and ``pk`` are scheme-specific objects; secret-key schemes return
    the same object twice.  Decoding is deterministic given ``sk``.
    """

    name: ClassVar[str] = "abstract"
    public_key: ClassVar[bool] = False

    @abstractmethod
    def keygen(self, rng: np.random.Generator) -> tuple[Any, Any]: ...

    @abstractmethod
    def codeword_length(self) -> int: ...

    @abstractmethod
    def encode_batch(self, pk: Any, count: int, rng: np.random.Generator, positions: np.ndarray | None = None) -> np.ndarray:
        """``count`` codewords as rows, optionally restricted to ``positions``."""

    @abstractmethod
    def decode_batch(self, sk: Any, X: np.ndarray, positions: np.ndarray | None = None) -> np.ndarray:
        """Boolean ONE-flags for every row of ``X``."""

    def read_set(self, sk: Any) -> np.ndarray:
        """Sorted coordinates the decoder depends on (default: all)."""
        return np.arange(self.codeword_length())

    # single-codeword conveniences -----------------------------------------

    def encode(self, pk: Any, rng: np.random.Generator) -> BitString:
        return BitString.from_bits(self.encode_batch(pk, 1, rng)[0])

    def decode(self, sk: Any, x: BitString) -> Decoding:
        if len(x) != self.codeword_length():
            raise LengthError(f"{self.name} expects {self.codeword_length()} bits, got {len(x)}")
        return Decoding.of(bool(self.decode_batch(sk, x.to_array()[None, :])[0]))

    # serialization ----------------------------------------------------------

    @abstractmethod
    def params_json(self) -> dict[str, Any]: ...

    @abstractmethod
    def key_to_json(self, sk: Any, pk: Any) -> dict[str, Any]: ...

    @abstractmethod
    def key_from_json(self, obj: dict[str, Any]) -> tuple[Any, Any]: ...

    def security_parameter(self) -> int:
        return int(self.params_json().get("n", self.codeword_length()))

    def _check_batch(self, X: np.ndarray, positions: np.ndarray | None) -> np.ndarray:
        X = np.asarray(X, dtype=np.uint8)
        width = self.codeword_length() if positions is None else len(positions)
        if X.ndim != 2 or X.shape[1] != width:
            raise LengthError(f"{self.name} batch has width {X.shape[-1]}, expected {width}")
        return X


# ---------------------------------------------------------------------------
# Reference schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Length:
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParameterError("n must be positive")


class UniformScheme(ZeroBitScheme):
    """Encodes uniform strings and always decodes BOT.  Null model for tests."""

    name = "uniform"

    def __init__(self, n: int):
        self.params = _Length(n)

    @classmethod
    def from_json(cls, obj: dict) -> UniformScheme:
        return cls(int(obj["n"]))

    def keygen(self, rng):
        return (), ()

    def codeword_length(self) -> int:
        return self.params.n

    def encode_batch(self, pk, count, rng, positions=None):
        positions = check_positions(positions, self.params.n)
        width = self.params.n if positions is None else positions.size
        return uniform_bits((count, width), rng)

    def decode_batch(self, sk, X, positions=None):
        X = self._check_batch(X, positions)
        return np.zeros(X.shape[0], dtype=bool)

    def read_set(self, sk):
        return np.arange(0)

    def params_json(self):
        return {"n": self.params.n}

    def key_to_json(self, sk, pk):
        return {}

    def key_from_json(self, obj):
        return (), ()


class PerfectScheme(ZeroBitScheme):
    """Codeword is ``0^n``; decodes ONE iff the input is exactly ``0^n``."""

    name = "perfect"

    def __init__(self, n: int):
        self.params = _Length(n)

    @classmethod
    def from_json(cls, obj: dict) -> PerfectScheme:
        return cls(int(obj["n"]))

    def keygen(self, rng):
        return (), ()

    def codeword_length(self) -> int:
        return self.params.n

    def encode_batch(self, pk, count, rng, positions=None):
        positions = check_positions(positions, self.params.n)
        width = self.params.n if positions is None else positions.size
        return np.zeros((count, width), dtype=np.uint8)

    def decode_batch(self, sk, X, positions=None):
        X = self._check_batch(X, positions)
        if positions is not None:
            locate(positions, np.arange(self.params.n))
        return ~X.any(axis=1)

    def params_json(self):
        return {"n": self.params.n}

    def key_to_json(self, sk, pk):
        return {}

    def key_from_json(self, obj):
        return (), ()


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ParameterError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ParameterError("successes must lie in [0, trials]")
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    radius = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # the endpoints at phat = 0 or 1 are exactly 0 or 1; clamp away float noise
    lo = 0.0 if successes == 0 else min(phat, max(0.0, centre - radius))
    hi = 1.0 if successes == trials else max(phat, min(1.0, centre + radius))
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int
    confidence: float = 0.99

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials, self.confidence)

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(p * (1 - p) / self.trials)

    def __add__(self, other: Estimate) -> Estimate:
        return Estimate(self.successes + other.successes, self.trials + other.trials, self.confidence)


DEFAULT_CHUNK = 4096


def _chunks(trials: int, chunk: int):
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        yield size
        done += size


def count_decodes(
    scheme: ZeroBitScheme,
    sk: Any,
    pk: Any,
    channel: ChannelSpec | None,
    trials: int,
    rng: np.random.Generator,
    *,
    random_input: bool = False,
    chunk: int = DEFAULT_CHUNK,
    project: bool = True,
) -> Estimate:
    """Count ONE outputs on channel-corrupted codewords (or uniform strings).

    With ``project`` the simulation touches only the decoder's read set.
    """
    length = scheme.codeword_length()
    positions = scheme.read_set(sk) if project else None
    ones = 0
    for size in _chunks(trials, chunk):
        if random_input:
            width = length if positions is None else positions.size
            X = uniform_bits((size, width), rng)
        else:
            X = scheme.encode_batch(pk, size, rng, positions=positions)
            if channel is not None:
                X = corrupt_batch(channel, X, rng, positions=positions, length=length)
        ones += int(scheme.decode_batch(sk, X, positions=positions).sum())
    return Estimate(ones, trials)


@dataclass(frozen=True)
class Calibration:
    alpha: Estimate
    delta: Estimate

    @property
    def gap(self) -> float:
        return self.alpha.rate - self.delta.rate


def calibrate_alpha_delta(
    scheme: ZeroBitScheme,
    channel: ChannelSpec | None,
    trials: int,
    rng: np.random.Generator | int,
    *,
    keys: int = 1,
) -> Calibration:
    """Estimate the ONE-rate on corrupted codewords (alpha) and on uniform strings (delta).

    Trials are split evenly over ``keys`` fresh keys.  Raises
    :class:`PreconditionError` when alpha does not exceed delta.
    """
    if trials < 1 or keys < 1:
        raise ParameterError("trials and keys must be positive")
    rng = make_rng(rng)
    alpha = Estimate(0, 0)
    delta = Estimate(0, 0)
    share = [trials // keys + (i < trials % keys) for i in range(keys)]
    for size in share:
        if size == 0:
            continue
        sk, pk = scheme.keygen(rng)
        alpha += count_decodes(scheme, sk, pk, channel, size, rng)
        delta += count_decodes(scheme, sk, pk, None, size, rng, random_input=True)
    cal = Calibration(alpha, delta)
    if cal.alpha.rate <= cal.delta.rate:
        raise PreconditionError(f"alpha={cal.alpha.rate:.4f} does not exceed delta={cal.delta.rate:.4f}; base scheme unusable")
    return cal


def chernoff_repetitions(alpha: float, delta: float, failure: float = 0.01) -> int:
    """Repetitions ``ceil(12 / (alpha - delta)^2 * ln(2 / failure))``.

    ``failure = 0.01`` gives the ``ln 200`` sizing.
    """
    if alpha <= delta:
        raise PreconditionError("alpha must exceed delta")
    if not 0 < failure < 1:
        raise ParameterError("failure must lie in (0, 1)")
    return math.ceil(12.0 / (alpha - delta) ** 2 * math.log(2.0 / failure))


def decision_threshold(t: int, alpha: float, delta: float) -> int:
    """``ceil(t (alpha + delta) / 2)``, rounded at 1e-9 to absorb float noise."""
    return math.ceil(round(t * (alpha + delta) / 2, 9))


# ---------------------------------------------------------------------------
# Amplification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AmplifiedKey:
    """Base key plus ``t`` secret shifts, a secret permutation and a threshold.

    ``perm[j]`` is the output position of concatenated bit ``j``.  The public
    view drops ``base_sk`` when the base scheme is public-key.
    """

    base_sk: Any
    base_pk: Any
    shifts: np.ndarray
    perm: np.ndarray
    theta: int

    def __post_init__(self) -> None:
        shifts = np.ascontiguousarray(self.shifts, dtype=np.uint8)
        perm = np.ascontiguousarray(self.perm, dtype=np.int64)
        t, n = shifts.shape
        if t < 1:
            raise ParameterError("t must be positive")
        if perm.shape != (t * n,) or not np.array_equal(np.sort(perm), np.arange(t * n)):
            raise ParameterError("perm must be a permutation of range(t n)")
        if not 0 <= self.theta <= t:
            raise ParameterError("theta must lie in [0, t]")
        shifts.setflags(write=False)
        perm.setflags(write=False)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "_inverse", np.argsort(perm))

    @property
    def t(self) -> int:
        return self.shifts.shape[0]

    @property
    def block_length(self) -> int:
        return self.shifts.shape[1]

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    def public(self, public_base: bool) -> AmplifiedKey:
        if not public_base:
            return self
        return AmplifiedKey(None, self.base_pk, self.shifts, self.perm, self.theta)


class AmplifiedScheme(ZeroBitScheme):
    """Repetition, secret shifts, a secret permutation and a threshold vote."""

    def __init__(self, base: ZeroBitScheme, t: int, alpha: float, delta: float):
        if t < 1:
            raise ParameterError("t must be positive")
        if alpha <= delta:
            raise PreconditionError(f"alpha={alpha} must exceed delta={delta}")
        self.base = base
        self.t = t
        self.alpha = float(alpha)
        self.delta = float(delta)
        self.theta = decision_threshold(t, alpha, delta)
        self.name = base.name
        self.public_key = base.public_key

    @classmethod
    def sized(cls, base: ZeroBitScheme, cal: Calibration, failure: float = 0.01) -> AmplifiedScheme:
        a, d = cal.alpha.rate, cal.delta.rate
        return cls(base, chernoff_repetitions(a, d, failure), a, d)

    def codeword_length(self) -> int:
        return self.t * self.base.codeword_length()

    def keygen(self, rng):
        key = amplify_keygen(self.base, self.t, self.alpha, self.delta, rng)
        return key, key.public(self.base.public_key)

    def read_set(self, key: AmplifiedKey) -> np.ndarray:
        n = self.base.codeword_length()
        inner = self.base.read_set(key.base_sk)
        concat = (np.arange(self.t)[:, None] * n + inner[None, :]).ravel()
        return np.sort(key.perm[concat])

    def encode_batch(self, key: AmplifiedKey, count, rng, positions=None):
        positions = check_positions(positions, self.codeword_length())
        n = self.base.codeword_length()
        if positions is None:
            blocks = self.base.encode_batch(key.base_pk, count * self.t, rng).reshape(count, self.t, n)
            flat = (blocks ^ key.shifts[None]).reshape(count, self.t * n)
            out = np.empty_like(flat)
            out[:, key.perm] = flat
            return out
        concat = key.inverse[positions]
        block, coord = np.divmod(concat, n)
        out = np.empty((count, positions.size), dtype=np.uint8)
        for coords, members, columns in _group_blocks(block, coord):
            X = self.base.encode_batch(key.base_pk, count * len(members), rng, positions=coords)
            X = X.reshape(count, len(members), coords.size) ^ key.shifts[members][:, coords][None]
            out[:, columns.ravel()] = X.reshape(count, -1)
        return out

    def decode_batch(self, key: AmplifiedKey, X, positions=None):
        X = self._check_batch(X, positions)
        if key.base_sk is None:
            raise PreconditionError("decoding needs the secret key")
        n = self.base.codeword_length()
        inner = self.base.read_set(key.base_sk)
        concat = (np.arange(self.t)[:, None] * n + inner[None, :]).ravel()
        cols = key.perm[concat] if positions is None else locate(positions, key.perm[concat])
        Y = X[:, cols].reshape(X.shape[0], self.t, inner.size) ^ key.shifts[:, inner][None]
        votes = self.base.decode_batch(key.base_sk, Y.reshape(-1, inner.size), positions=inner)
        return votes.reshape(X.shape[0], self.t).sum(axis=1) >= self.theta

    def params_json(self):
        return {**self.base.params_json(), "t": self.t, "alpha": self.alpha, "delta": self.delta}

    def key_to_json(self, key: AmplifiedKey, pk=None):
        return {
            "t": self.t,
            "theta": key.theta,
            "alpha": self.alpha,
            "delta": self.delta,
            "shifts": [BitString.from_bits(row).to_hex() for row in key.shifts],
            "perm": key.perm.tolist(),
            "base_key": self.base.key_to_json(key.base_sk, key.base_pk),
        }

    def key_from_json(self, obj):
        n = self.base.codeword_length()
        base_sk, base_pk = self.base.key_from_json(obj["base_key"])
        shifts = np.array([BitString.from_hex(h, n).to_array() for h in obj["shifts"]], dtype=np.uint8)
        key = AmplifiedKey(base_sk, base_pk, shifts, np.asarray(obj["perm"]), int(obj["theta"]))
        if key.t != self.t:
            raise ParameterError("key repetition count does not match scheme")
        return key, key.public(self.base.public_key)


def _group_blocks(block: np.ndarray, coord: np.ndarray):
    """Group requested (block, coord) pairs by identical coordinate sets.

    Yields ``(coords, member_blocks, columns)`` with ``columns[i, j]`` the
    output column of ``(member_blocks[i], coords[j])``.
    """
    order = np.lexsort((coord, block))
    b_sorted, c_sorted = block[order], coord[order]
    starts = np.flatnonzero(np.r_[True, b_sorted[1:] != b_sorted[:-1]])
    ends = np.r_[starts[1:], b_sorted.size]
    groups: dict[bytes, tuple[np.ndarray, list[int], list[np.ndarray]]] = {}
    for s, e in zip(starts, ends):
        coords = c_sorted[s:e]
        entry = groups.setdefault(coords.tobytes(), (coords, [], []))
        entry[1].append(int(b_sorted[s]))
        entry[2].append(order[s:e])
    for coords, members, columns in groups.values():
        yield coords, np.asarray(members, dtype=np.int64), np.vstack(columns)


def amplify_keygen(scheme: ZeroBitScheme, t: int, alpha: float, delta: float, rng) -> AmplifiedKey:
    if alpha <= delta:
        raise PreconditionError(f"alpha={alpha} must exceed delta={delta}")
    if t < 1:
        raise ParameterError("t must be positive")
    rng = make_rng(rng)
    sk, pk = scheme.keygen(rng)
    n = scheme.codeword_length()
    shifts = uniform_bits((t, n), rng)
    perm = rng.permutation(t * n)
    return AmplifiedKey(sk, pk, shifts, perm, decision_threshold(t, alpha, delta))


def _wrapper(scheme: ZeroBitScheme, key: AmplifiedKey) -> AmplifiedScheme:
    wrapper = AmplifiedScheme.__new__(AmplifiedScheme)
    wrapper.base, wrapper.t, wrapper.theta = scheme, key.t, key.theta
    wrapper.alpha = wrapper.delta = float("nan")
    wrapper.name, wrapper.public_key = scheme.name, scheme.public_key
    return wrapper


def amplify_encode(scheme: ZeroBitScheme, key: AmplifiedKey, rng) -> BitString:
    return _wrapper(scheme, key).encode(key, make_rng(rng))


def amplify_decode(scheme: ZeroBitScheme, key: AmplifiedKey, x: BitString) -> Decoding:
    return _wrapper(scheme, key).decode(key, x)
