"""Public-key PRC from planted hyperloops and Goldreich's PRG.

The public key is a 5-hypergraph; a codeword is the PRG output
``P5(x_a, x_b, x_c, x_d, x_e) = x_a ^ x_b ^ x_c ^ (x_d & x_e)`` on every
hyperedge for a uniform seed.  A planted hyperloop (every vertex of degree
two in the 3-prefixes) makes the XOR of its output bits equal to an XOR of
``ell`` independent AND bits, which is 0 with probability
``(1 + 2^-ell) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from prc.bits import BitString, uniform_bits
from prc.core import Decoding, ZeroBitScheme, check_positions, locate
from prc.errors import LengthError, ParameterError

_MAX_CELLS = 1 << 24  # bound on count * width for one dense block


@dataclass(frozen=True, eq=False)
class Hypergraph3:
    n_vertices: int
    edges: np.ndarray

    def degrees(self) -> np.ndarray:
        return np.bincount(np.asarray(self.edges).ravel(), minlength=self.n_vertices)


@dataclass(frozen=True, eq=False)
class Hypergraph5:
    """Ordered 5-hyperedges; position matters for the predicate."""

    n_vertices: int
    edges: np.ndarray

    def __post_init__(self) -> None:
        edges = np.ascontiguousarray(self.edges, dtype=np.int32)
        if edges.ndim != 2 or edges.shape[1] != 5:
            raise ParameterError("edges must be an (m, 5) array")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_vertices):
            raise ParameterError("edge vertex out of range")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Hypergraph5) and self.n_vertices == other.n_vertices and np.array_equal(self.edges, other.edges)

    def to_json(self) -> dict:
        return {"n": self.n_vertices, "edges": self.edges.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> Hypergraph5:
        return cls(int(obj["n"]), np.asarray(obj["edges"], dtype=np.int32).reshape(-1, 5))


@dataclass(frozen=True, eq=False)
class HyperloopSecret:
    """Edge-index sets ``S_1 .. S_t`` (one row per planted copy)."""

    loops: np.ndarray

    def __post_init__(self) -> None:
        loops = np.ascontiguousarray(self.loops, dtype=np.int64)
        if loops.ndim != 2 or loops.shape[0] < 1:
            raise ParameterError("loops must be a non-empty (t, ell) array")
        loops.setflags(write=False)
        object.__setattr__(self, "loops", loops)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HyperloopSecret) and np.array_equal(self.loops, other.loops)

    def to_json(self) -> dict:
        return {"loops": self.loops.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> HyperloopSecret:
        return cls(np.asarray(obj["loops"]))


def default_ell(n: int) -> int:
    """``0.36 log2 n`` rounded to the nearest even integer, at least 2."""
    return max(2, 2 * round(0.36 * math.log2(n) / 2))


@dataclass(frozen=True)
class HyperloopParams:
    """Scheme parameters; unset ``m``, ``ell``, ``t`` take their asymptotic defaults.

    ``decoder`` is ``single`` (parity of the first loop) or ``multi`` (count of
    vanishing loops against ``threshold``).
    """

    n: int
    delta: float = 0.1
    m: int | None = None
    ell: int | None = None
    t: int | None = None
    decoder: str = "single"
    threshold: int | None = None

    def __post_init__(self) -> None:
        if self.n < 5:
            raise ParameterError("need at least 5 vertices")
        if self.m is None:
            object.__setattr__(self, "m", math.floor(self.n ** (1.5 - self.delta) + 1e-9))
        if self.ell is None:
            object.__setattr__(self, "ell", default_ell(self.n))
        if self.t is None:
            object.__setattr__(self, "t", max(1, math.floor(self.n ** (0.75 - self.delta) + 1e-9)))
        if self.ell < 2 or self.ell % 2:
            raise ParameterError(f"ell must be even and at least 2, got {self.ell}")
        if self.t < 1 or self.m < 0:
            raise ParameterError("t must be positive and m non-negative")
        if self.t * (3 * self.ell // 2) > self.n:
            raise ParameterError("planted copies do not fit: t * 3 ell / 2 > n")
        if 2 * self.ell + 3 * self.ell // 2 > self.n:
            raise ParameterError("too few vertices to pad the first loop disjointly")
        if self.decoder not in ("single", "multi"):
            raise ParameterError(f"unknown decoder {self.decoder!r}")
        if self.decoder == "multi" and self.threshold is None:
            clean = 0.5 * (1 + 2.0 ** -self.ell)
            object.__setattr__(self, "threshold", math.ceil(round(self.t * (clean + 0.5) / 2, 9)))
        if self.threshold is not None and not 0 <= self.threshold <= self.t:
            raise ParameterError("threshold must lie in [0, t]")

    @property
    def codeword_length(self) -> int:
        return self.m + self.t * self.ell

    def to_json(self) -> dict:
        out = {"n": self.n, "delta": self.delta, "m": self.m, "ell": self.ell, "t": self.t, "decoder": self.decoder}
        if self.threshold is not None:
            out["threshold"] = self.threshold
        return out


def canonical_hyperloop(ell: int) -> Hypergraph3:
    """Edge ``i`` is ``(w_i, w_{i+1 mod ell}, c_{i // 2})``; ``w_i = i``, ``c_j = ell + j``."""
    if ell < 2 or ell % 2:
        raise ParameterError(f"ell must be even and at least 2, got {ell}")
    i = np.arange(ell)
    edges = np.stack([i, (i + 1) % ell, ell + i // 2], axis=1)
    return Hypergraph3(3 * ell // 2, edges)


def _distinct_rows(count: int, width: int, n: int, rng: np.random.Generator, exclude: np.ndarray | None = None) -> np.ndarray:
    """``count`` rows of ``width`` distinct vertices, each row avoiding its ``exclude`` row."""
    out = rng.integers(0, n, size=(count, width))
    while True:
        full = out if exclude is None else np.concatenate([exclude, out], axis=1)
        s = np.sort(full, axis=1)
        bad = np.flatnonzero((s[:, 1:] == s[:, :-1]).any(axis=1))
        if bad.size == 0:
            return out
        out[bad] = rng.integers(0, n, size=(bad.size, width))


def sample_planted_hypergraph(params: HyperloopParams, rng: np.random.Generator) -> tuple[Hypergraph5, HyperloopSecret]:
    """Random 5-hypergraph with ``t`` vertex-disjoint planted hyperloops.

    The padding vertices of the first loop's edges are distinct from each
    other and from that loop's vertices, so the products they contribute are
    independent.  Edges are shuffled; the secret holds post-shuffle indices.
    """
    n, m, ell, t = params.n, params.m, params.ell, params.t
    size = 3 * ell // 2
    random_edges = _distinct_rows(m, 5, n, rng)
    base = canonical_hyperloop(ell).edges
    verts = rng.choice(n, size=t * size, replace=False).reshape(t, size)
    prefixes = verts[:, base]  # (t, ell, 3)
    free = np.setdiff1d(np.arange(n), verts[0])
    first_pad = rng.choice(free, size=2 * ell, replace=False).reshape(ell, 2)
    planted = [np.concatenate([prefixes[0], first_pad], axis=1)]
    if t > 1:
        rest = prefixes[1:].reshape(-1, 3)
        planted.append(np.concatenate([rest, _distinct_rows(rest.shape[0], 2, n, rng, exclude=rest)], axis=1))
    edges = np.concatenate([random_edges, *planted], axis=0)
    perm = rng.permutation(edges.shape[0])
    position = np.argsort(perm)
    loops = position[m + np.arange(t * ell)].reshape(t, ell)
    return Hypergraph5(n, edges[perm]), HyperloopSecret(loops)


def hyperloop_keygen(params: HyperloopParams, rng: np.random.Generator) -> tuple[HyperloopSecret, Hypergraph5]:
    H, S = sample_planted_hypergraph(params, rng)
    return S, H


def p5(E: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Predicate on gathered labels: ``E`` is ``(k, 5)`` indices into the columns of ``U``."""
    a, b, c, d, e = (U[:, E[:, j]] for j in range(5))
    return a ^ b ^ c ^ (d & e)


def goldreich_prg_eval(H: Hypergraph5, x: BitString) -> BitString:
    if len(x) != H.n_vertices:
        raise LengthError(f"seed must have {H.n_vertices} bits, got {len(x)}")
    return BitString.from_bits(p5(H.edges, x.to_array()[None, :])[0])


def hyperloop_encode_batch(H: Hypergraph5, count: int, rng: np.random.Generator, positions: np.ndarray | None = None) -> np.ndarray:
    """PRG outputs on fresh uniform seeds, restricted to ``positions`` if given.

    Only the seed bits feeding the requested edges are sampled.
    """
    positions = check_positions(positions, H.m)
    E = H.edges if positions is None else H.edges[positions]
    verts, local = np.unique(E, return_inverse=True)
    local = local.reshape(E.shape)
    out = np.empty((count, E.shape[0]), dtype=np.uint8)
    step = max(1, _MAX_CELLS // max(1, verts.size + E.shape[0]))
    for lo in range(0, count, step):
        size = min(step, count - lo)
        out[lo : lo + size] = p5(local, uniform_bits((size, verts.size), rng))
    return out


def hyperloop_encode(H: Hypergraph5, rng: np.random.Generator) -> BitString:
    return BitString.from_bits(hyperloop_encode_batch(H, 1, rng)[0])


def loop_parities(S: HyperloopSecret, X: np.ndarray, positions: np.ndarray | None = None) -> np.ndarray:
    """``(count, t)`` parities of every planted loop."""
    idx = S.loops if positions is None else locate(positions, S.loops.ravel()).reshape(S.loops.shape)
    return (X[:, idx].sum(axis=2) & 1).astype(np.uint8)


def hyperloop_decode(S: HyperloopSecret, x: BitString) -> Decoding:
    """ONE iff the first loop's bits XOR to zero."""
    if x.length <= int(S.loops.max()):
        raise LengthError("input shorter than the key's edge indices")
    return Decoding.of(x.parity(S.loops[0]) == 0)


class HyperloopScheme(ZeroBitScheme):
    name = "hyperloop"
    public_key = True

    def __init__(self, params: HyperloopParams):
        self.params = params

    @classmethod
    def from_json(cls, obj: dict) -> HyperloopScheme:
        return cls(HyperloopParams(**obj))

    def keygen(self, rng):
        return hyperloop_keygen(self.params, rng)

    def codeword_length(self) -> int:
        return self.params.codeword_length

    def read_set(self, sk: HyperloopSecret) -> np.ndarray:
        loops = sk.loops[:1] if self.params.decoder == "single" else sk.loops
        return np.sort(loops.ravel())

    def encode_batch(self, pk, count, rng, positions=None):
        return hyperloop_encode_batch(pk, count, rng, positions)

    def decode_batch(self, sk: HyperloopSecret, X, positions=None):
        X = self._check_batch(X, positions)
        if self.params.decoder == "single":
            first = HyperloopSecret(sk.loops[:1])
            return loop_parities(first, X, positions)[:, 0] == 0
        vanishing = (loop_parities(sk, X, positions) == 0).sum(axis=1)
        return vanishing >= self.params.threshold

    def params_json(self):
        return self.params.to_json()

    def key_to_json(self, sk, pk):
        out = {"pk": pk.to_json()}
        if sk is not None:
            out["sk"] = sk.to_json()
        return out

    def key_from_json(self, obj):
        pk = Hypergraph5.from_json(obj["pk"])
        sk = HyperloopSecret.from_json(obj["sk"]) if "sk" in obj else None
        if pk.m != self.codeword_length():
            raise ParameterError("public key edge count does not match parameters")
        return sk, pk
