import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from prc.bits import (
    BitString,
    HypSpec,
    RngStream,
    bias_delta,
    f2_left_kernel_vector,
    f2_rank,
    hamming_sphere_matrix,
    hypergeom_even_parity_bounds,
    hypergeom_even_parity_exact,
    hypergeom_lower_parity_bias,
    make_rng,
    pack_rows,
    packed_parity,
    sample_bernoulli_vector,
    sample_hamming_sphere,
    unpack_rows,
    xor_parity_zero_prob,
)
from prc.errors import ParameterError

bit_lists = st.lists(st.integers(0, 1), max_size=200)


# --- BitString --------------------------------------------------------------


@given(bit_lists)
def test_hex_round_trip(bits):
    x = BitString.from_bits(bits)
    assert BitString.from_hex(x.to_hex(), len(bits)) == x
    assert BitString.from_json(x.to_json()) == x
    assert x.to_array().tolist() == bits


def test_hex_is_msb_first_and_padded():
    x = BitString.from_str("1000000011")
    assert x.to_hex() == "80c0"
    assert x.to_json() == {"length": 10, "hex": "80c0"}


def test_from_hex_rejects_dirty_padding():
    with pytest.raises(ParameterError):
        BitString.from_hex("80c1", 10)
    with pytest.raises(ParameterError):
        BitString.from_hex("80", 10)


@given(bit_lists, st.data())
def test_word_ops_match_naive(bits, data):
    other = data.draw(st.lists(st.integers(0, 1), min_size=len(bits), max_size=len(bits)))
    x, y = BitString.from_bits(bits), BitString.from_bits(other)
    a, b = np.array(bits, dtype=int), np.array(other, dtype=int)
    assert x.weight == a.sum()
    assert x.hamming_distance(y) == int((a != b).sum())
    assert x.dot(y) == int((a & b).sum() % 2)
    assert (x ^ y).to_array().tolist() == (a ^ b).tolist()
    assert (x + y).to_array().tolist() == bits + other
    assert x.parity() == a.sum() % 2


def test_flip_and_indexing():
    x = BitString.zeros(70).flip([0, 69])
    assert x[0] == 1 and x[69] == 1 and x.weight == 2
    assert str(BitString.from_str("0110")) == "0110"
    with pytest.raises(ParameterError):
        BitString.from_bits([0, 2])


# --- streams ----------------------------------------------------------------


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7).child("trial", 3).generator().integers(0, 2**32, 8)
    b = RngStream(7).child("trial", 3).generator().integers(0, 2**32, 8)
    c = RngStream(7).child("trial", 4).generator().integers(0, 2**32, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(make_rng(7, "trial", 3).integers(0, 2**32, 8), a)


# --- samplers ---------------------------------------------------------------


def test_bernoulli_edge_cases(rng):
    assert str(sample_bernoulli_vector(8, 0.0, rng)) == "00000000"
    assert str(sample_bernoulli_vector(8, 1.0, rng)) == "11111111"
    with pytest.raises(ParameterError):
        sample_bernoulli_vector(8, 1.5, rng)


def test_bernoulli_weight_tail():
    # 99% of seeds land within 500 of 30000: sd is sqrt(21000) ~ 145
    hits = sum(abs(sample_bernoulli_vector(10**5, 0.3, np.random.default_rng(s)).weight - 30000) <= 500 for s in range(200))
    assert hits >= 198
    assert stats.binom.cdf(30500, 10**5, 0.3) - stats.binom.cdf(29499, 10**5, 0.3) > 0.99


def test_hamming_sphere_edges(rng):
    assert str(sample_hamming_sphere(5, 0, rng)) == "00000"
    assert str(sample_hamming_sphere(5, 5, rng)) == "11111"
    with pytest.raises(ParameterError):
        sample_hamming_sphere(5, 6, rng)


@pytest.mark.parametrize("sampler", ["single", "matrix"])
def test_hamming_sphere_uniform(sampler):
    rng = np.random.default_rng(1)
    draws = 10**5
    if sampler == "single":
        rows = np.array([sample_hamming_sphere(4, 2, rng).to_array() for _ in range(draws)])
    else:
        rows = hamming_sphere_matrix(draws, 4, 2, rng)
    assert (rows.sum(axis=1) == 2).all()
    codes = rows @ np.array([8, 4, 2, 1])
    counts = np.array([np.count_nonzero(codes == c) for c in (3, 5, 6, 9, 10, 12)])
    assert np.all(np.abs(counts / draws - 1 / 6) <= 0.01)
    assert stats.chisquare(counts).pvalue > 1e-3


# --- parity oracles -----------------------------------------------------------


def test_xor_parity_examples():
    assert xor_parity_zero_prob([]) == 1.0
    assert xor_parity_zero_prob([0.5]) == 0.5
    assert xor_parity_zero_prob([0.25, 0.25]) == pytest.approx(5 / 8)


@given(st.lists(st.sampled_from([0.0, 0.125, 0.25, 0.375, 0.5, 0.75, 1.0]), max_size=6))
def test_xor_parity_matches_enumeration(ps):
    exact = Fraction(0)
    for outcome in itertools.product((0, 1), repeat=len(ps)):
        if sum(outcome) % 2 == 0:
            prob = Fraction(1)
            for bit, p in zip(outcome, ps):
                prob *= Fraction(p) if bit else 1 - Fraction(p)
            exact += prob
    assert xor_parity_zero_prob(ps) == pytest.approx(float(exact), abs=1e-12)
    if all(p <= 0.5 for p in ps):
        assert 0.5 <= xor_parity_zero_prob(ps) <= 1.0


def test_xor_parity_monte_carlo():
    rng = np.random.default_rng(3)
    ps = [0.1, 0.2, 0.3]
    trials = 10**6
    X = rng.random((trials, 3)) < np.array(ps)
    est = float((X.sum(axis=1) % 2 == 0).mean())
    target = xor_parity_zero_prob(ps)
    assert abs(est - target) <= 3 * math.sqrt(target * (1 - target) / trials)


def _even_by_enumeration(N, K, t):
    total = math.comb(N, t)
    return sum(math.comb(K, k) * math.comb(N - K, t - k) for k in range(0, t + 1, 2)) / total


def test_exact_parity_examples():
    assert hypergeom_even_parity_exact(HypSpec(4, 2, 2)) == pytest.approx(1 / 3)
    assert hypergeom_even_parity_exact(HypSpec(10, 5, 2)) == pytest.approx(20 / 45)
    assert hypergeom_even_parity_exact(HypSpec(12, 0, 5)) == pytest.approx(1.0)


@given(st.integers(1, 30).flatmap(lambda N: st.tuples(st.just(N), st.integers(0, N), st.integers(0, N))))
def test_exact_parity_matches_combinatorics(spec):
    N, K, t = spec
    assert hypergeom_even_parity_exact(HypSpec(N, K, t)) == pytest.approx(_even_by_enumeration(N, K, t), abs=1e-12)


def test_bounds_examples():
    assert hypergeom_even_parity_bounds(HypSpec(10, 5, 0)) == (1.0, 1.0)
    lo, hi = hypergeom_even_parity_bounds(HypSpec(10, 5, 2))
    assert (lo, hi) == pytest.approx((0.42, 0.58))
    assert lo <= 20 / 45 <= hi
    lo, hi = hypergeom_even_parity_bounds(HypSpec(20, 10, 3))
    assert lo <= _even_by_enumeration(20, 10, 3) <= hi
    with pytest.raises(ParameterError):
        hypergeom_even_parity_bounds(HypSpec(10, 2, 3))


def test_bounds_fail_on_small_populations():
    # Counterexample: 2 draws from 13 items with 7 special.  Even parity has
    # probability (C(7,2) + C(6,2)) / C(13,2) = 36/78, below the lower bound
    # 1/2 - (1/2)(3/11)^2.  Conditioning on the parity of earlier draws moves
    # the per-draw probability, which the interval argument ignores.
    exact = hypergeom_even_parity_exact(HypSpec(13, 7, 2))
    lo, _ = hypergeom_even_parity_bounds(HypSpec(13, 7, 2))
    assert exact == pytest.approx(36 / 78)
    assert lo == pytest.approx(0.5 - 0.5 * (3 / 11) ** 2)
    assert exact < lo


def test_one_sided_bound_small_counterexample():
    # 4 draws from 20 items with 4 special: the per-draw interval tops out at
    # 4/16, giving 1/2 + (1/2)(1/2)^4 = 0.53125, yet the exact value is lower.
    spec = HypSpec(20, 4, 4)
    exact = _even_by_enumeration(20, 4, 4)
    assert hypergeom_even_parity_exact(spec) == pytest.approx(exact)
    assert exact < 0.5 * (1 + hypergeom_lower_parity_bias(spec))


def test_one_sided_bound_at_codeword_scale():
    # The hyperloop channel experiment flips 11499 of 114992 positions and
    # reads a 4-edge loop; there the bound holds, by a margin near 1e-6.
    spec = HypSpec(114992, 11499, 4)
    exact = hypergeom_even_parity_exact(spec)
    bound = 0.5 * (1 + hypergeom_lower_parity_bias(spec))
    assert 0 < exact - bound < 1e-5
    with pytest.raises(ParameterError):
        hypergeom_lower_parity_bias(HypSpec(10, 6, 2))


def test_bias_delta():
    assert bias_delta(BitString.from_str("0101")) == 0
    assert bias_delta(BitString.from_str("1111")) == 1
    assert bias_delta(BitString.from_str("11101000")) == 0
    with pytest.raises(ParameterError):
        bias_delta(BitString.zeros(0))


# --- packed F2 algebra ----------------------------------------------------------


def _naive_rank(M):
    M = M.copy() % 2
    rank = 0
    for col in range(M.shape[1]):
        rows = [r for r in range(rank, M.shape[0]) if M[r, col]]
        if not rows:
            continue
        M[[rank, rows[0]]] = M[[rows[0], rank]]
        for r in range(M.shape[0]):
            if r != rank and M[r, col]:
                M[r] ^= M[rank]
        rank += 1
    return rank


@given(st.integers(1, 20), st.integers(1, 140), st.integers(0, 2**32 - 1))
def test_rank_and_kernel(rows, cols, seed):
    rng = np.random.default_rng(seed)
    M = rng.integers(0, 2, (rows, cols), dtype=np.uint8)
    if rows > 1 and seed % 3 == 0:
        M[-1] = M[0] ^ M[1 % rows]
    assert f2_rank(M) == _naive_rank(M)
    y = f2_left_kernel_vector(M)
    if f2_rank(M) == rows:
        assert y is None
    else:
        assert y.any() and not ((y.astype(int) @ M) % 2).any()


@given(st.integers(1, 10), st.integers(1, 150), st.integers(0, 2**32 - 1))
def test_pack_round_trip_and_parity(rows, cols, seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(0, 2, (rows, cols), dtype=np.uint8)
    B = rng.integers(0, 2, (3, cols), dtype=np.uint8)
    assert np.array_equal(unpack_rows(pack_rows(A), cols), A)
    expected = (A.astype(int) @ B.T.astype(int)) % 2
    assert np.array_equal(packed_parity(pack_rows(A), pack_rows(B)), expected)
