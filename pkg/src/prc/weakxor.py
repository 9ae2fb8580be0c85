"""Public-key PRC from a weak planted XOR matrix and sparse-secret LPN.

Key generation plants ``t`` rows of ``G`` whose XOR is a Ber(m, eps) vector.
Codewords are ``G u + e`` with ``u ~ Ber(m, eta)`` and ``e ~ Ber(n, eta)``; the
decoder checks the parity of the codeword on the planted rows.  Also here: the
Gaussian-elimination attack on the planted structure and a multi-check
variant with several disjoint planted parities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from prc.bits import (
    BitString,
    bernoulli_matrix,
    f2_rank,
    pack_rows,
    packed_parity,
    unpack_rows,
)
from prc.core import Decoding, ZeroBitScheme, check_positions, locate
from prc.errors import LengthError, ParameterError

PATTERN_LIMIT = 12  # restricted encode groups columns of G by pattern up to this many rows


@dataclass(frozen=True)
class WeakXorParams:
    n: int
    m: int
    t: int
    eps: float = 0.0
    eta: float = 0.05

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ParameterError("n and m must be positive")
        if not 1 <= self.t <= self.n:
            raise ParameterError(f"need 1 <= t <= n, got t={self.t}, n={self.n}")
        for name in ("eps", "eta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 0.5:
                raise ParameterError(f"{name} must lie in [0, 1/2], got {value}")


@dataclass(frozen=True, eq=False)
class XorMatrix:
    """``G`` with ``n`` rows of length ``m``, stored as packed 64-bit words."""

    words: np.ndarray
    m: int

    def __post_init__(self) -> None:
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != (self.m + 63) // 64:
            raise ParameterError("packed rows do not match m")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_dense(cls, G: np.ndarray) -> XorMatrix:
        G = np.asarray(G, dtype=np.uint8)
        return cls(pack_rows(G), G.shape[1])

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def dense(self, rows: np.ndarray | None = None) -> np.ndarray:
        W = self.words if rows is None else self.words[np.asarray(rows)]
        return unpack_rows(W, self.m)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, XorMatrix) and self.m == other.m and np.array_equal(self.words, other.words)

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "rows": [BitString.from_bits(r).to_hex() for r in self.dense()]}

    @classmethod
    def from_json(cls, obj: dict) -> XorMatrix:
        m = int(obj["m"])
        rows = [BitString.from_hex(h, m).to_array() for h in obj["rows"]]
        if len(rows) != int(obj["n"]):
            raise ParameterError("row count does not match n")
        return cls.from_dense(np.array(rows, dtype=np.uint8).reshape(len(rows), m))


@dataclass(frozen=True, eq=False)
class XorSecret:
    """Support of the ``t``-sparse indicator ``s`` (sorted)."""

    support: np.ndarray
    n: int

    def __post_init__(self) -> None:
        support = np.unique(np.asarray(self.support, dtype=np.int64))
        if support.size != len(self.support) or (support.size and (support[0] < 0 or support[-1] >= self.n)):
            raise ParameterError("support must be distinct indices below n")
        support.setflags(write=False)
        object.__setattr__(self, "support", support)

    @property
    def t(self) -> int:
        return self.support.size

    def indicator(self) -> BitString:
        bits = np.zeros(self.n, dtype=np.uint8)
        bits[self.support] = 1
        return BitString.from_bits(bits)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, XorSecret) and self.n == other.n and np.array_equal(self.support, other.support)

    def to_json(self) -> dict:
        return {"support": self.support.tolist()}


def sample_planted_xor(params: WeakXorParams, rng: np.random.Generator) -> tuple[XorMatrix, XorSecret]:
    """Uniform ``G`` whose rows on a random ``t``-subset XOR to ``v ~ Ber(m, eps)``."""
    G = rng.integers(0, 2, size=(params.n, params.m), dtype=np.uint8)
    chosen = rng.choice(params.n, size=params.t, replace=False)
    v = bernoulli_matrix(params.m, params.eps, rng)
    last, rest = chosen[-1], chosen[:-1]
    G[last] = np.bitwise_xor.reduce(G[rest], axis=0) ^ v if rest.size else v
    return XorMatrix.from_dense(G), XorSecret(chosen, params.n)


def weakxor_keygen(params: WeakXorParams, rng: np.random.Generator) -> tuple[XorSecret, XorMatrix]:
    G, s = sample_planted_xor(params, rng)
    return s, G


def _column_patterns(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct nonzero column patterns of a ``(k, m)`` block and their multiplicities."""
    k = rows.shape[0]
    codes = (rows.astype(np.int64) << np.arange(k, dtype=np.int64)[:, None]).sum(axis=0)
    uniq, counts = np.unique(codes, return_counts=True)
    keep = uniq != 0
    uniq, counts = uniq[keep], counts[keep]
    bits = ((uniq[:, None] >> np.arange(k, dtype=np.int64)[None, :]) & 1).astype(np.uint8)
    return bits, counts


def weakxor_encode_batch(
    G: XorMatrix, eta: float, count: int, rng: np.random.Generator, positions: np.ndarray | None = None
) -> np.ndarray:
    """Rows ``G u + e``, optionally restricted to codeword coordinates ``positions``.

    For a few coordinates the restricted sample groups the columns of
    ``G[positions]`` by pattern: the pattern's contribution is active with the
    parity probability of its ``Ber(eta)`` entries of ``u``, independently
    across patterns.  This equals the marginal of the full product exactly.
    """
    positions = check_positions(positions, G.n)
    if positions is not None and 0 < positions.size <= PATTERN_LIMIT:
        bits, counts = _column_patterns(G.dense(positions))
        q = 0.5 * (1.0 - (1.0 - 2.0 * eta) ** counts)
        active = (rng.random((count, counts.size)) < q).astype(np.int64)
        Gu = ((active @ bits.astype(np.int64)) & 1).astype(np.uint8)
        return Gu ^ bernoulli_matrix(Gu.shape, eta, rng)
    rows = G.words if positions is None else G.words[positions]
    width = rows.shape[0]
    U = pack_rows(bernoulli_matrix((count, G.m), eta, rng))
    out = np.empty((count, width), dtype=np.uint8)
    step = max(1, (1 << 22) // max(1, width * rows.shape[1]))
    for lo in range(0, count, step):
        out[lo : lo + step] = packed_parity(U[lo : lo + step], rows)
    return out ^ bernoulli_matrix((count, width), eta, rng)


def weakxor_encode_with(G: XorMatrix, u: BitString, e: BitString) -> BitString:
    """Deterministic ``G u + e`` for injected randomness (test hook)."""
    if len(u) != G.m or len(e) != G.n:
        raise LengthError("u must have length m and e length n")
    Gu = packed_parity(pack_rows(u.to_array()[None, :]), G.words)[0]
    return BitString.from_bits(Gu) ^ e


def weakxor_encode(G: XorMatrix, eta: float, rng: np.random.Generator) -> BitString:
    return BitString.from_bits(weakxor_encode_batch(G, eta, 1, rng)[0])


def weakxor_decode(s: XorSecret, x: BitString):
    if len(x) != s.n:
        raise LengthError(f"expected {s.n} bits, got {len(x)}")
    return Decoding.of(x.parity(s.support) == 0)


class WeakXorScheme(ZeroBitScheme):
    """Zero-bit PRC with ``eta`` bound into the instance."""

    name = "weakxor"
    public_key = True

    def __init__(self, params: WeakXorParams):
        self.params = params

    @classmethod
    def from_json(cls, obj: dict) -> WeakXorScheme:
        return cls(WeakXorParams(**obj))

    def keygen(self, rng):
        return weakxor_keygen(self.params, rng)

    def codeword_length(self) -> int:
        return self.params.n

    def read_set(self, sk: XorSecret) -> np.ndarray:
        return sk.support

    def encode_batch(self, pk: XorMatrix, count, rng, positions=None):
        return weakxor_encode_batch(pk, self.params.eta, count, rng, positions)

    def decode_batch(self, sk: XorSecret, X, positions=None):
        X = self._check_batch(X, positions)
        cols = sk.support if positions is None else locate(positions, sk.support)
        return (X[:, cols].sum(axis=1) & 1) == 0

    def params_json(self):
        p = self.params
        return {"n": p.n, "m": p.m, "t": p.t, "eps": p.eps, "eta": p.eta}

    def key_to_json(self, sk, pk):
        out = {"pk": pk.to_json()}
        if sk is not None:
            out["sk"] = sk.to_json()
        return out

    def key_from_json(self, obj):
        pk = XorMatrix.from_json(obj["pk"])
        sk = XorSecret(obj["sk"]["support"], pk.n) if "sk" in obj else None
        if pk.n != self.params.n or pk.m != self.params.m:
            raise ParameterError("key dimensions do not match parameters")
        return sk, pk


# ---------------------------------------------------------------------------
# Rank attack
# ---------------------------------------------------------------------------


class Verdict(enum.Enum):
    PLANTED = "planted"
    RANDOM = "random"


def rank_attack(
    G: XorMatrix | np.ndarray,
    mode: str = "full",
    samples: int = 16,
    rng: np.random.Generator | None = None,
) -> Verdict:
    """Gaussian-elimination test for a planted linear dependency among rows.

    ``full`` mode (needs ``n <= m``) reports PLANTED iff ``rank(G) < n``.
    ``submatrix`` mode draws ``samples`` random ``m/2``-row subsets and reports
    PLANTED iff any of them is rank deficient; it applies when ``n > m``.
    """
    dense = G.dense() if isinstance(G, XorMatrix) else np.asarray(G, dtype=np.uint8)
    n, m = dense.shape
    if mode == "full":
        if n > m:
            raise ParameterError("full-rank test needs n <= m; use mode='submatrix'")
        return Verdict.PLANTED if f2_rank(dense) < n else Verdict.RANDOM
    if mode == "submatrix":
        if rng is None:
            raise ParameterError("submatrix mode needs an rng")
        k = m // 2
        if not 1 <= k <= n:
            raise ParameterError("submatrix mode needs 2 <= m <= 2n")
        for _ in range(samples):
            rows = rng.choice(n, size=k, replace=False)
            if f2_rank(dense[rows]) < k:
                return Verdict.PLANTED
        return Verdict.RANDOM
    raise ParameterError(f"unknown rank attack mode {mode!r}")


def uniform_matrix(n: int, m: int, rng: np.random.Generator) -> XorMatrix:
    return XorMatrix.from_dense(rng.integers(0, 2, size=(n, m), dtype=np.uint8))


# ---------------------------------------------------------------------------
# Multi-check variant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MulticheckParams:
    n: int
    m: int
    t: int
    tau: int
    eta: float = 0.05
    threshold: int | None = None

    def __post_init__(self) -> None:
        if self.tau < 1 or self.t < 1:
            raise ParameterError("tau and t must be positive")
        if self.tau * self.t > self.n:
            raise ParameterError("tau * t disjoint supports do not fit in n rows")
        if not 0.0 <= self.eta <= 0.5:
            raise ParameterError("eta must lie in [0, 1/2]")
        if self.threshold is not None and not 0 <= self.threshold <= self.tau:
            raise ParameterError("threshold must lie in [0, tau]")

    @property
    def resolved_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        # midpoint between the clean-codeword and uniform check rates
        clean = 0.5 * (1 + (1 - 2 * self.eta) ** self.t)
        return int(np.ceil(self.tau * (clean + 0.5) / 2))


def multicheck_keygen(n: int, m: int, tau: int, t: int, rng: np.random.Generator) -> tuple[list[XorSecret], XorMatrix]:
    """Uniform ``G`` conditioned on ``tau`` disjoint ``t``-sparse parities vanishing.

    Rows outside the supports and all but one row per support are free; the
    remaining row of each support is the XOR of the others.
    """
    if tau < 1 or t < 1 or tau * t > n:
        raise ParameterError("need tau, t >= 1 and tau * t <= n")
    G = rng.integers(0, 2, size=(n, m), dtype=np.uint8)
    rows = rng.choice(n, size=tau * t, replace=False).reshape(tau, t)
    secrets = []
    for support in rows:
        last, rest = support[-1], support[:-1]
        G[last] = np.bitwise_xor.reduce(G[rest], axis=0) if rest.size else 0
        secrets.append(XorSecret(support, n))
    return secrets, XorMatrix.from_dense(G)


def multicheck_count(sks: list[XorSecret], X: np.ndarray, positions: np.ndarray | None = None) -> np.ndarray:
    """Number of vanishing checks per row of ``X``."""
    X = np.asarray(X, dtype=np.uint8)
    total = np.zeros(X.shape[0], dtype=np.int64)
    for s in sks:
        cols = s.support if positions is None else locate(positions, s.support)
        total += (X[:, cols].sum(axis=1) & 1) == 0
    return total


def multicheck_decode(sks: list[XorSecret], x: BitString, threshold: int):
    if any(len(x) != s.n for s in sks):
        raise LengthError("input length does not match key")
    return Decoding.of(int(multicheck_count(sks, x.to_array()[None, :])[0]) >= threshold)


class MulticheckScheme(ZeroBitScheme):
    """Weak-XOR encoder with a vote over ``tau`` disjoint planted checks."""

    name = "multicheck"
    public_key = True

    def __init__(self, params: MulticheckParams):
        self.params = params

    def keygen(self, rng):
        p = self.params
        return multicheck_keygen(p.n, p.m, p.tau, p.t, rng)

    def codeword_length(self) -> int:
        return self.params.n

    def read_set(self, sk):
        return np.sort(np.concatenate([s.support for s in sk]))

    def encode_batch(self, pk, count, rng, positions=None):
        return weakxor_encode_batch(pk, self.params.eta, count, rng, positions)

    def decode_batch(self, sk, X, positions=None):
        X = self._check_batch(X, positions)
        return multicheck_count(sk, X, positions) >= self.params.resolved_threshold

    def params_json(self):
        p = self.params
        return {"n": p.n, "m": p.m, "t": p.t, "tau": p.tau, "eta": p.eta, "threshold": p.resolved_threshold}

    def key_to_json(self, sk, pk):
        out = {"pk": pk.to_json()}
        if sk is not None:
            out["sk"] = [s.to_json() for s in sk]
        return out

    def key_from_json(self, obj):
        pk = XorMatrix.from_json(obj["pk"])
        sk = [XorSecret(s["support"], pk.n) for s in obj["sk"]] if "sk" in obj else None
        return sk, pk
