"""Secret-key PRC from sparse parities of a shared random header.

A codeword is ``a || <a, s_1> + e_1 || ... || <a, s_k'> + e_k'`` with a
uniform header ``a``, weight-``ell`` secrets ``s_i`` and tag noise
``e_i ~ Ber(1/2 - eps)``.  Decoding rejects unbalanced headers, then counts
matching tags against ``k'/2 + n^delta sqrt(k')``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from prc.bits import BitString, uniform_bits
from prc.core import Decoding, ZeroBitScheme, check_positions
from prc.errors import LengthError, ParameterError


def default_kprime(n: int, delta: float, eps: float) -> int:
    """``ceil((2 n^(2 delta) / eps)^2)``."""
    return math.ceil(round((2 * n ** (2 * delta) / eps) ** 2, 9))


@dataclass(frozen=True)
class SsrParams:
    """``ell = ceil(c log2 n)``; ``kprime`` defaults to the robustness sizing."""

    n: int
    eps: float
    delta: float = 0.01
    c: float = 0.3
    kprime: int | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError("n must be at least 2")
        if not 0 < self.eps <= 0.5:
            raise ParameterError(f"eps must lie in (0, 1/2], got {self.eps}")
        if not 0 < self.delta <= 0.01:
            raise ParameterError(f"delta must lie in (0, 1/100], got {self.delta}")
        if self.c <= 0:
            raise ParameterError("c must be positive")
        if self.kprime is None:
            object.__setattr__(self, "kprime", default_kprime(self.n, self.delta, self.eps))
        if self.kprime < 1:
            raise ParameterError("kprime must be positive")
        if self.ell > self.n:
            raise ParameterError(f"ell={self.ell} exceeds n={self.n}")

    @property
    def ell(self) -> int:
        return max(1, math.ceil(round(self.c * math.log2(self.n), 9)))

    @property
    def codeword_length(self) -> int:
        return self.n + self.kprime

    @property
    def balance_limit(self) -> float:
        """Headers with ``bias_delta`` above ``1 / (2 n^0.4)`` are rejected."""
        return 1.0 / (2.0 * self.n**0.4)

    @property
    def threshold_twice(self) -> int:
        """Decode ONE iff ``2 * matches >= k' + ceil(2 n^delta sqrt(k'))``."""
        return self.kprime + math.ceil(round(2 * self.n**self.delta * math.sqrt(self.kprime), 9))

    def to_json(self) -> dict:
        return {"n": self.n, "eps": self.eps, "delta": self.delta, "c": self.c, "kprime": self.kprime}


@dataclass(frozen=True, eq=False)
class SsrKey:
    """``k'`` secrets as an index array of shape ``(k', ell)`` (each row sorted)."""

    n: int
    secrets: np.ndarray

    def __post_init__(self) -> None:
        secrets = np.sort(np.asarray(self.secrets, dtype=np.int64), axis=1)
        if secrets.ndim != 2 or secrets.shape[0] < 1:
            raise ParameterError("secrets must be a non-empty (k', ell) array")
        if (np.diff(secrets, axis=1) <= 0).any() or secrets.min() < 0 or secrets.max() >= self.n:
            raise ParameterError("each secret needs ell distinct indices below n")
        secrets.setflags(write=False)
        object.__setattr__(self, "secrets", secrets)

    @property
    def kprime(self) -> int:
        return self.secrets.shape[0]

    @property
    def ell(self) -> int:
        return self.secrets.shape[1]

    def secret(self, i: int) -> BitString:
        bits = np.zeros(self.n, dtype=np.uint8)
        bits[self.secrets[i]] = 1
        return BitString.from_bits(bits)

    def size_bits(self) -> int:
        """Bits of the index encoding: ``k' * ell * ceil(log2 n)``."""
        return self.kprime * self.ell * math.ceil(math.log2(self.n))

    def max_load(self) -> int:
        """Largest number of secrets touching a single coordinate."""
        return int(np.bincount(self.secrets.ravel(), minlength=self.n).max())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SsrKey) and self.n == other.n and np.array_equal(self.secrets, other.secrets)

    def to_json(self) -> dict:
        return {"n": self.n, "ell": self.ell, "secrets": self.secrets.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> SsrKey:
        key = cls(int(obj["n"]), np.asarray(obj["secrets"]))
        if key.ell != int(obj["ell"]):
            raise ParameterError("ell does not match the secrets")
        return key


def ssr_keygen(params: SsrParams, rng: np.random.Generator) -> SsrKey:
    """``k'`` independent uniform weight-``ell`` secrets."""
    keys = rng.random((params.kprime, params.n))
    return SsrKey(params.n, np.argpartition(keys, params.ell - 1, axis=1)[:, : params.ell])


def tag_noise(shape, eps: float, rng: np.random.Generator) -> np.ndarray:
    """``Ber(1/2 - eps)`` bits.

    For dyadic ``eps = 2^-x`` the bit is ``y > 2^(x-1) + 1`` for ``y`` uniform in
    ``[1, 2^x]``, which is exact; other values use a float threshold.
    """
    frac = Fraction(eps)
    if frac.numerator == 1 and frac.denominator & (frac.denominator - 1) == 0:
        size = frac.denominator
        y = rng.integers(1, size + 1, size=shape)
        return (y > size // 2 + 1).astype(np.uint8)
    return (rng.random(shape) < 0.5 - eps).astype(np.uint8)


def header_tags(key: SsrKey, A: np.ndarray) -> np.ndarray:
    """``<a, s_i>`` for every header row and secret, shape ``(count, k')``."""
    return (np.asarray(A, dtype=np.uint8)[:, key.secrets].sum(axis=2) & 1).astype(np.uint8)


def ssr_encode_batch(key: SsrKey, eps: float, count: int, rng: np.random.Generator, header: np.ndarray | None = None) -> np.ndarray:
    A = uniform_bits((count, key.n), rng) if header is None else np.broadcast_to(np.asarray(header, dtype=np.uint8), (count, key.n))
    tags = header_tags(key, A) ^ tag_noise((count, key.kprime), eps, rng)
    return np.concatenate([A, tags], axis=1)


def ssr_encode(key: SsrKey, eps: float, rng: np.random.Generator, header: BitString | None = None) -> BitString:
    a = None if header is None else header.to_array()
    return BitString.from_bits(ssr_encode_batch(key, eps, 1, rng, a)[0])


def tag_matches(key: SsrKey, X: np.ndarray) -> np.ndarray:
    """``w_i = [<a~, s_i> = b~_i]`` for every row, shape ``(count, k')``."""
    X = np.asarray(X, dtype=np.uint8)
    return header_tags(key, X[:, : key.n]) == X[:, key.n :]


def ssr_decode_batch(key: SsrKey, params: SsrParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.uint8)
    header = X[:, : key.n]
    weight = header.sum(axis=1, dtype=np.int64)
    # relative slack absorbs rounding in n^0.4 (exact powers such as 1024^0.4 = 16)
    balanced = np.abs(key.n - 2 * weight) <= key.n * params.balance_limit * (1 + 1e-12)
    matches = tag_matches(key, X).sum(axis=1, dtype=np.int64)
    return balanced & (2 * matches >= params.threshold_twice)


def ssr_decode(key: SsrKey, params: SsrParams, x: BitString) -> Decoding:
    if len(x) != key.n + key.kprime:
        raise LengthError(f"expected {key.n + key.kprime} bits, got {len(x)}")
    return Decoding.of(bool(ssr_decode_batch(key, params, x.to_array()[None, :])[0]))


def ssr_expected_tag_match(eps: float, p: float, ell: int) -> float:
    """``(1 + 2 eps (1 - 2p)^(ell + 1)) / 2``: mean of ``w_i`` under BSC(p)."""
    if not 0 <= p <= 0.5:
        raise ParameterError("p must lie in [0, 1/2]")
    return 0.5 * (1 + 2 * eps * (1 - 2 * p) ** (ell + 1))


class SsrScheme(ZeroBitScheme):
    name = "ssr"
    public_key = False

    def __init__(self, params: SsrParams):
        self.params = params

    @classmethod
    def from_json(cls, obj: dict) -> SsrScheme:
        return cls(SsrParams(**obj))

    def keygen(self, rng):
        key = ssr_keygen(self.params, rng)
        return key, key

    def codeword_length(self) -> int:
        return self.params.codeword_length

    def encode_batch(self, pk, count, rng, positions=None):
        positions = check_positions(positions, self.codeword_length())
        X = ssr_encode_batch(pk, self.params.eps, count, rng)
        return X if positions is None else X[:, positions]

    def decode_batch(self, sk, X, positions=None):
        X = self._check_batch(X, positions)
        if positions is not None and positions.size != self.codeword_length():
            raise ParameterError("SSR decoding reads every coordinate")
        return ssr_decode_batch(sk, self.params, X)

    def params_json(self):
        return self.params.to_json()

    def key_to_json(self, sk, pk):
        return {"sk": sk.to_json()}

    def key_from_json(self, obj):
        key = SsrKey.from_json(obj["sk"])
        if key.n != self.params.n or key.kprime != self.params.kprime or key.ell != self.params.ell:
            raise ParameterError("key does not match parameters")
        return key, key
