"""PRF-tagged blocks: a baseline that tolerates only vanishing error rates.

A codeword is ``x_1 || f_k(x_1) || ... || x_t || f_k(x_t)`` with uniform
headers ``x_i``.  Decoding succeeds if any block's tag is within ``n/10`` of
the PRF evaluated on its (possibly corrupted) header, so a single flipped
header bit ruins a block.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from prc.bits import BitString, uniform_bits
from prc.core import Decoding, ZeroBitScheme, check_positions
from prc.errors import LengthError, ParameterError

KEY_BYTES = 16


@dataclass(frozen=True)
class WarmupParams:
    n: int
    tau: float
    block_count: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError("n must be at least 2")
        if self.tau < 1:
            raise ParameterError("tau must be at least 1")
        if self.block_count < 1:
            raise ParameterError("block_count must be positive")

    @property
    def input_len(self) -> int:
        return max(1, math.ceil(round(math.sqrt(self.tau) * math.log2(self.n), 9)))

    @property
    def block_len(self) -> int:
        return self.input_len + self.n

    @property
    def codeword_length(self) -> int:
        return self.block_count * self.block_len


@dataclass(frozen=True)
class WarmupKey:
    k: bytes
    tau: float
    block_count: int
    input_len: int
    tag_len: int

    def __post_init__(self) -> None:
        if len(self.k) != KEY_BYTES:
            raise ParameterError(f"key must be {KEY_BYTES} bytes")
        if self.input_len < 1 or self.block_count < 1:
            raise ParameterError("input_len and block_count must be positive")

    def to_json(self) -> dict:
        return {
            "k": self.k.hex(),
            "tau": self.tau,
            "block_count": self.block_count,
            "input_len": self.input_len,
            "tag_len": self.tag_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> WarmupKey:
        return cls(bytes.fromhex(obj["k"]), obj["tau"], int(obj["block_count"]), int(obj["input_len"]), int(obj["tag_len"]))


def warmup_keygen(n: int, tau: float, block_count: int, rng: np.random.Generator) -> WarmupKey:
    params = WarmupParams(n, tau, block_count)
    k = rng.integers(0, 256, size=KEY_BYTES, dtype=np.uint8).tobytes()
    return WarmupKey(k, tau, block_count, params.input_len, n)


def prf_eval(k: bytes, x: np.ndarray, n: int) -> np.ndarray:
    """SHA-256 in counter mode over ``k || bytes(x) || counter``, truncated to ``n`` bits."""
    header = np.packbits(np.asarray(x, dtype=np.uint8), bitorder="big").tobytes()
    prefix = k + len(x).to_bytes(4, "big") + header
    blocks = []
    for counter in range(-(-n // 256)):
        blocks.append(hashlib.sha256(prefix + counter.to_bytes(4, "big")).digest())
    return np.unpackbits(np.frombuffer(b"".join(blocks), dtype=np.uint8), bitorder="big")[:n]


def warmup_encode_batch(key: WarmupKey, count: int, rng: np.random.Generator) -> np.ndarray:
    headers = uniform_bits((count, key.block_count, key.input_len), rng)
    out = np.empty((count, key.block_count, key.input_len + key.tag_len), dtype=np.uint8)
    out[:, :, : key.input_len] = headers
    for r in range(count):
        for i in range(key.block_count):
            out[r, i, key.input_len :] = prf_eval(key.k, headers[r, i], key.tag_len)
    return out.reshape(count, -1)


def warmup_encode(key: WarmupKey, rng: np.random.Generator) -> BitString:
    return BitString.from_bits(warmup_encode_batch(key, 1, rng)[0])


def block_distances(key: WarmupKey, X: np.ndarray) -> np.ndarray:
    """``(count, t)`` Hamming distances between each tag and the PRF of its header."""
    X = np.asarray(X, dtype=np.uint8).reshape(X.shape[0], key.block_count, key.input_len + key.tag_len)
    dist = np.empty(X.shape[:2], dtype=np.int64)
    for r in range(X.shape[0]):
        for i in range(key.block_count):
            tag = prf_eval(key.k, X[r, i, : key.input_len], key.tag_len)
            dist[r, i] = int(np.count_nonzero(tag != X[r, i, key.input_len :]))
    return dist


def warmup_decode(key: WarmupKey, x: BitString) -> Decoding:
    expected = key.block_count * (key.input_len + key.tag_len)
    if len(x) != expected:
        raise LengthError(f"expected {expected} bits, got {len(x)}")
    return Decoding.of(bool((10 * block_distances(key, x.to_array()[None, :]) <= key.tag_len).any()))


class WarmupScheme(ZeroBitScheme):
    name = "warmup"
    public_key = False

    def __init__(self, params: WarmupParams):
        self.params = params

    @classmethod
    def from_json(cls, obj: dict) -> WarmupScheme:
        return cls(WarmupParams(**obj))

    def keygen(self, rng):
        p = self.params
        key = warmup_keygen(p.n, p.tau, p.block_count, rng)
        return key, key

    def codeword_length(self) -> int:
        return self.params.codeword_length

    def encode_batch(self, pk, count, rng, positions=None):
        positions = check_positions(positions, self.codeword_length())
        X = warmup_encode_batch(pk, count, rng)
        return X if positions is None else X[:, positions]

    def decode_batch(self, sk, X, positions=None):
        X = self._check_batch(X, positions)
        if positions is not None and positions.size != self.codeword_length():
            raise ParameterError("warmup decoding reads every coordinate")
        return (10 * block_distances(sk, X) <= sk.tag_len).any(axis=1)

    def params_json(self):
        p = self.params
        return {"n": p.n, "tau": p.tau, "block_count": p.block_count}

    def key_to_json(self, sk, pk):
        return {"sk": sk.to_json()}

    def key_from_json(self, obj):
        key = WarmupKey.from_json(obj["sk"])
        return key, key
