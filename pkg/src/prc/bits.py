"""Bit strings, seeded random streams, samplers and analytic parity oracles.

A :class:`BitString` stores its bits packed little-endian into 64-bit words so
XOR, weight and F2 inner products run word-parallel.  Monte Carlo code in the
rest of the package works on ``uint8`` bit matrices of shape ``(trials, n)``
instead; :meth:`BitString.to_array` / :meth:`BitString.from_bits` convert.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from prc.errors import ParameterError


def _check_prob(p: float, name: str = "p") -> None:
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ParameterError(f"{name} must lie in [0, 1], got {p!r}")


# ---------------------------------------------------------------------------
# BitString
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BitString:
    """Immutable fixed-length bit sequence.

    ``words[k]`` holds bits ``64k .. 64k+63`` with bit ``i`` at position
    ``i % 64`` (least significant first).  Padding bits beyond ``length`` are
    always zero.
    """

    words: np.ndarray
    length: int

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ParameterError("length must be non-negative")
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.shape != (_nwords(self.length),):
            raise ParameterError("word array does not match length")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    # construction ---------------------------------------------------------

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> BitString:
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1:
            raise ParameterError("bits must be one-dimensional")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("bits must be 0 or 1")
        n = int(arr.size)
        packed = np.packbits(arr.astype(np.uint8), bitorder="little")
        buf = np.zeros(_nwords(n) * 8, dtype=np.uint8)
        buf[: packed.size] = packed
        return cls(buf.view("<u8").astype(np.uint64), n)

    @classmethod
    def zeros(cls, n: int) -> BitString:
        return cls(np.zeros(_nwords(n), dtype=np.uint64), n)

    @classmethod
    def ones(cls, n: int) -> BitString:
        return cls.from_bits(np.ones(n, dtype=np.uint8))

    @classmethod
    def from_str(cls, s: str) -> BitString:
        s = s.replace("_", "").strip()
        if any(ch not in "01" for ch in s):
            raise ParameterError("binary string must contain only 0/1")
        return cls.from_bits([int(ch) for ch in s])

    @classmethod
    def from_hex(cls, text: str, length: int) -> BitString:
        """Inverse of :meth:`to_hex`."""
        raw = bytes.fromhex(text)
        if len(raw) != (length + 7) // 8:
            raise ParameterError(f"hex payload has {len(raw)} bytes, expected {(length + 7) // 8}")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="big")
        if np.any(bits[length:]):
            raise ParameterError("non-zero padding bits in hex payload")
        return cls.from_bits(bits[:length])

    # views ----------------------------------------------------------------

    def to_array(self) -> np.ndarray:
        """Bits as a fresh ``uint8`` array of 0/1 values."""
        raw = self.words.astype("<u8").view(np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.length].copy()

    def to_hex(self) -> str:
        """Lowercase hex, most significant bit first within each byte."""
        return np.packbits(self.to_array(), bitorder="big").tobytes().hex()

    def to_json(self) -> dict:
        return {"length": self.length, "hex": self.to_hex()}

    @classmethod
    def from_json(cls, obj: dict) -> BitString:
        return cls.from_hex(obj["hex"], int(obj["length"]))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.to_array())

    def __repr__(self) -> str:
        if self.length <= 64:
            return f"BitString('{self}')"
        return f"BitString(length={self.length}, weight={self.weight})"

    # sequence protocol ----------------------------------------------------

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not -self.length <= i < self.length:
            raise IndexError(i)
        i %= self.length
        return int((self.words[i >> 6] >> np.uint64(i & 63)) & np.uint64(1))

    def __iter__(self):
        return iter(int(b) for b in self.to_array())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self.length == other.length and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.length, self.words.tobytes()))

    # F2 arithmetic ----------------------------------------------------------

    def _same_length(self, other: BitString) -> None:
        if self.length != other.length:
            raise ParameterError(f"length mismatch: {self.length} vs {other.length}")

    def __xor__(self, other: BitString) -> BitString:
        self._same_length(other)
        return BitString(self.words ^ other.words, self.length)

    def __add__(self, other: BitString) -> BitString:
        """Concatenation."""
        return BitString.from_bits(np.concatenate([self.to_array(), other.to_array()]))

    @property
    def weight(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def hamming_distance(self, other: BitString) -> int:
        self._same_length(other)
        return int(np.bitwise_count(self.words ^ other.words).sum())

    def dot(self, other: BitString) -> int:
        """Inner product over F2."""
        self._same_length(other)
        return int(np.bitwise_count(self.words & other.words).sum() & 1)

    def parity(self, indices: Sequence[int] | np.ndarray | None = None) -> int:
        if indices is None:
            return self.weight & 1
        return int(self.to_array()[np.asarray(indices, dtype=np.int64)].sum() & 1)

    def flip(self, indices: Sequence[int] | np.ndarray) -> BitString:
        arr = self.to_array()
        arr[np.asarray(indices, dtype=np.int64)] ^= 1
        return BitString.from_bits(arr)


def _nwords(n: int) -> int:
    return (n + 63) // 64


def hamming_distance(x: BitString, y: BitString) -> int:
    return x.hamming_distance(y)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def _stream_word(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    if part < 0:
        raise ParameterError("stream ids must be non-negative")
    return int(part)


@dataclass(frozen=True)
class RngStream:
    """Named, splittable random stream.

    ``(seed, stream)`` fully determines the output.  The generator is a Philox
    counter-based bit generator keyed through :class:`numpy.random.SeedSequence`
    with the stream path as spawn key, so sibling streams are independent and
    any stream can be rebuilt without replaying the others.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def child(self, *parts: int | str) -> RngStream:
        return RngStream(self.seed, self.stream + tuple(_stream_word(p) for p in parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def make_rng(seed: int | RngStream | np.random.Generator | None = None, *parts: int | str) -> np.random.Generator:
    """Coerce a seed, stream or generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        if parts:
            raise ParameterError("cannot derive a named stream from a live generator")
        return seed
    if isinstance(seed, RngStream):
        return seed.child(*parts).generator()
    if seed is None:
        return np.random.default_rng()
    return RngStream(int(seed)).child(*parts).generator()


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def bernoulli_matrix(shape: int | tuple[int, ...], p: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Ber(p) bits as ``uint8``."""
    _check_prob(p)
    if p == 0.0:
        return np.zeros(shape, dtype=np.uint8)
    if p == 1.0:
        return np.ones(shape, dtype=np.uint8)
    if p == 0.5:
        return rng.integers(0, 2, size=shape, dtype=np.uint8)
    return (rng.random(shape) < p).astype(np.uint8)


def sample_bernoulli_vector(n: int, p: float, rng: np.random.Generator) -> BitString:
    return BitString.from_bits(bernoulli_matrix(n, p, rng))


def uniform_bits(shape: int | tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.uint8)


def sample_subset(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-``d`` subset of ``range(n)`` (sorted)."""
    if not 0 <= d <= n:
        raise ParameterError(f"need 0 <= d <= n, got d={d}, n={n}")
    return np.sort(rng.choice(n, size=d, replace=False))


def sample_hamming_sphere(n: int, d: int, rng: np.random.Generator) -> BitString:
    """Uniform element of the Hamming sphere of radius ``d`` in {0,1}^n."""
    bits = np.zeros(n, dtype=np.uint8)
    bits[sample_subset(n, d, rng)] = 1
    return BitString.from_bits(bits)


def hamming_sphere_matrix(count: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent uniform weight-``d`` rows of length ``n``.

    Ranks i.i.d. uniform keys per row; the ``d`` smallest keys mark the ones.
    """
    if not 0 <= d <= n:
        raise ParameterError(f"need 0 <= d <= n, got d={d}, n={n}")
    out = np.zeros((count, n), dtype=np.uint8)
    if d == 0 or count == 0:
        return out
    if d == n:
        out[:] = 1
        return out
    keys = rng.random((count, n))
    idx = np.argpartition(keys, d - 1, axis=1)[:, :d]
    np.put_along_axis(out, idx, 1, axis=1)
    return out


# ---------------------------------------------------------------------------
# Analytic oracles
# ---------------------------------------------------------------------------


def xor_parity_zero_prob(ps: Iterable[float]) -> float:
    """Pr[X_1 xor ... xor X_n = 0] for independent X_i ~ Ber(p_i).

    Equals ``(1 + prod(1 - 2 p_i)) / 2``.  The identity holds for every
    ``p_i`` in [0, 1], not only [0, 1/2]; values above 1/2 are accepted.
    """
    prod = 1.0
    for p in ps:
        _check_prob(p)
        prod *= 1.0 - 2.0 * p
    return 0.5 * (1.0 + prod)


@dataclass(frozen=True)
class HypSpec:
    """Hyp(N, K, t): draws ``t`` without replacement from ``N`` items, ``K`` special."""

    population: int
    special: int
    draws: int

    def __post_init__(self) -> None:
        if not 0 <= self.special <= self.population:
            raise ParameterError("need 0 <= K <= N")
        if not 0 <= self.draws <= self.population:
            raise ParameterError("need 0 <= t <= N")


def hypergeom_even_parity_bounds(spec: HypSpec) -> tuple[float, float]:
    """Two-sided bound ``1/2 -+ |1-2p|^t / 2`` on Pr[Hyp(N, K, t) is even].

    ``p`` maximises ``|1 - 2p|`` over ``[(K-t)/N, K/(N-t)]`` (clipped to
    [0, 1]).  Requires ``t <= K <= N``.
    """
    n, m, t = spec.population, spec.special, spec.draws
    if not t <= m:
        raise ParameterError("bounds require draws <= special <= population")
    if t == 0:
        return 1.0, 1.0
    lo = (m - t) / n
    hi = m / (n - t) if n > t else 1.0
    lo, hi = max(0.0, lo), min(1.0, hi)
    worst = max(abs(1.0 - 2.0 * lo), abs(1.0 - 2.0 * hi))
    slack = 0.5 * worst**t
    return 0.5 - slack, 0.5 + slack


def hypergeom_lower_parity_bias(spec: HypSpec) -> float:
    """``min prod(1-2p_i)`` over the per-draw interval, for an interval below 1/2.

    This is the one-sided form used when most draws are unlikely to be
    special (e.g. a channel flipping a small fraction of positions): every
    ``p_i <= K/(N-t) < 1/2`` so the product is minimised at the upper end.
    """
    n, m, t = spec.population, spec.special, spec.draws
    hi = m / (n - t) if n > t else 1.0
    if hi >= 0.5:
        raise ParameterError("lower parity bias needs K/(N-t) < 1/2")
    return (1.0 - 2.0 * hi) ** t


def hypergeom_even_parity_exact(spec: HypSpec) -> float:
    """Pr[Hyp(N, K, t) is even] from the exact pmf."""
    n, m, t = spec.population, spec.special, spec.draws
    if spec.population > 10**6:
        raise ParameterError("population too large for pmf enumeration")
    lo, hi = max(0, t - (n - m)), min(t, m)
    ks = np.arange(lo + (lo & 1), hi + 1, 2)
    if ks.size == 0:
        return 0.0
    return float(np.clip(stats.hypergeom.pmf(ks, n, m, t).sum(), 0.0, 1.0))


def bias_delta(a: BitString | np.ndarray) -> float:
    """Smallest delta for which ``a`` is delta-biased: ``|#0 - #1| / n``."""
    if isinstance(a, BitString):
        n, w = a.length, a.weight
    else:
        arr = np.asarray(a)
        n, w = int(arr.size), int(arr.sum())
    if n == 0:
        raise ParameterError("bias of an empty string is undefined")
    return abs(n - 2 * w) / n


# ---------------------------------------------------------------------------
# Packed F2 matrices
# ---------------------------------------------------------------------------


def pack_rows(M: np.ndarray) -> np.ndarray:
    """Pack a 0/1 matrix ``(r, c)`` into little-endian ``uint64`` words ``(r, ceil(c/64))``."""
    M = np.asarray(M, dtype=np.uint8)
    if M.ndim != 2:
        raise ParameterError("pack_rows expects a matrix")
    r, c = M.shape
    packed = np.packbits(M, axis=1, bitorder="little")
    buf = np.zeros((r, _nwords(c) * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return buf.view("<u8").astype(np.uint64)


def unpack_rows(W: np.ndarray, c: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`."""
    W = np.ascontiguousarray(W, dtype=np.uint64)
    raw = W.astype("<u8").view(np.uint8).reshape(W.shape[0], -1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :c].copy()


def packed_parity(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """F2 products of packed rows: ``out[..., i, j] = <A[i], B[j]>`` as ``uint8``."""
    return (np.bitwise_count(A[:, None, :] & B[None, :, :]).sum(axis=2, dtype=np.int64) & 1).astype(np.uint8)


def _eliminate(A: np.ndarray, cols: int) -> int:
    """Forward elimination in place on packed rows over the first ``cols`` columns."""
    rows = A.shape[0]
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        w, bit = col >> 6, np.uint64(1) << np.uint64(col & 63)
        hits = np.flatnonzero(A[rank:, w] & bit)
        if hits.size == 0:
            continue
        pivot = rank + hits[0]
        if pivot != rank:
            A[[rank, pivot]] = A[[pivot, rank]]
        below = rank + 1 + np.flatnonzero(A[rank + 1 :, w] & bit)
        A[below] ^= A[rank]
        rank += 1
    return rank


def f2_rank(M: np.ndarray) -> int:
    """Row rank over F2 of a 0/1 matrix, by elimination on packed words."""
    M = np.asarray(M, dtype=np.uint8)
    return _eliminate(pack_rows(M), M.shape[1])


def f2_left_kernel_vector(M: np.ndarray) -> np.ndarray | None:
    """A nonzero ``y`` with ``y^T M = 0`` over F2, or ``None`` if rows are independent."""
    M = np.asarray(M, dtype=np.uint8)
    rows, cols = M.shape
    # the appended identity tracks which original rows were combined
    A = pack_rows(np.concatenate([M, np.eye(rows, dtype=np.uint8)], axis=1))
    rank = _eliminate(A, cols)
    if rank == rows:
        return None
    return unpack_rows(A[rank : rank + 1], cols + rows)[0, cols:]
