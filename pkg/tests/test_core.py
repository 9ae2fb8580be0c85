import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from prc.bits import BitString, RngStream
from prc.channels import ChannelSpec
from prc.core import (
    AmplifiedKey,
    AmplifiedScheme,
    Decoding,
    Estimate,
    PerfectScheme,
    UniformScheme,
    amplify_decode,
    amplify_encode,
    amplify_keygen,
    calibrate_alpha_delta,
    chernoff_repetitions,
    count_decodes,
    decision_threshold,
    wilson_interval,
)
from prc.errors import LengthError, ParameterError, PreconditionError
from prc.harness import wilson_coverage
from prc.hyperloop import HyperloopParams, HyperloopScheme
from prc.weakxor import WeakXorParams, WeakXorScheme

WEAK = WeakXorScheme(WeakXorParams(n=32, m=32, t=4, eta=0.05))


def test_decoding_truthiness():
    assert Decoding.ONE and not Decoding.BOT
    assert Decoding.of(True) is Decoding.ONE


# --- Wilson -------------------------------------------------------------------


def test_wilson_known_values():
    lo, hi = wilson_interval(50, 100, 0.95)
    assert (lo, hi) == pytest.approx((0.4038, 0.5962), abs=1e-4)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(ParameterError):
        wilson_interval(3, 0)


@given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_bounds_in_unit_interval(case):
    k, n = case
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


@pytest.mark.parametrize("p", [0.01, 0.2, 0.5, 0.83])
def test_wilson_coverage(p):
    coverage = wilson_coverage(p, 500, 4000, np.random.default_rng(4))
    assert coverage >= 0.985  # nominal 0.99; sd of the coverage estimate ~0.0016


def test_estimate_arithmetic():
    e = Estimate(3, 10) + Estimate(7, 10)
    assert e.rate == 0.5 and e.trials == 20
    assert e.stderr == pytest.approx(math.sqrt(0.25 / 20))


# --- sizing -------------------------------------------------------------------


def test_threshold_examples():
    assert decision_threshold(1000, 0.828, 0.5) == 664
    assert decision_threshold(1, 1.0, 0.0) == 1
    assert chernoff_repetitions(0.828, 0.5) == math.ceil(12 / 0.328**2 * math.log(200))
    with pytest.raises(PreconditionError):
        chernoff_repetitions(0.5, 0.5)


def test_hoeffding_soundness_bound_for_example():
    # random input, t=1000, theta=664, per-block ONE rate 1/2
    exact_tail = stats.binom.sf(663, 1000, 0.5)
    assert exact_tail <= math.exp(-2 * 0.164**2 * 1000)


# --- reference schemes and calibration -----------------------------------------


def test_calibrate_perfect_scheme():
    cal = calibrate_alpha_delta(PerfectScheme(16), None, 2000, np.random.default_rng(0))
    assert cal.alpha.rate == 1.0 and cal.delta.rate < 0.01
    assert cal.gap > 0.99


def test_calibrate_rejects_useless_scheme():
    with pytest.raises(PreconditionError):
        calibrate_alpha_delta(UniformScheme(16), None, 200, 0)


def test_calibrate_weakxor():
    cal = calibrate_alpha_delta(WEAK, None, 40_000, RngStream(1).generator(), keys=4)
    assert abs(cal.alpha.rate - 0.5 * (1 + 0.9**4)) < 0.015
    assert abs(cal.delta.rate - 0.5) < 0.015


def test_calibrate_hyperloop():
    scheme = HyperloopScheme(HyperloopParams(n=256, ell=4))
    cal = calibrate_alpha_delta(scheme, None, 200_000, RngStream(2).generator(), keys=10)
    assert abs(cal.alpha.rate - 0.53125) < 0.007
    assert abs(cal.delta.rate - 0.5) < 0.007


# --- amplifier ------------------------------------------------------------------


def test_keygen_basic_shape(rng):
    key = amplify_keygen(WEAK, 50, 0.8, 0.5, rng)
    assert key.t == 50 and key.block_length == 32 and key.theta == 33
    assert np.array_equal(np.sort(key.perm), np.arange(50 * 32))
    with pytest.raises(PreconditionError):
        amplify_keygen(WEAK, 5, 0.4, 0.5, rng)
    with pytest.raises(ParameterError):
        AmplifiedKey(None, None, np.zeros((2, 4)), np.zeros(8), 1)


def test_trivial_wrapper_is_base(rng):
    scheme = PerfectScheme(8)
    key = AmplifiedKey((), (), np.zeros((1, 8), np.uint8), np.arange(8), 1)
    x = amplify_encode(scheme, key, rng)
    assert x == BitString.zeros(8)
    assert amplify_decode(scheme, key, x) is Decoding.ONE
    assert amplify_decode(scheme, key, x.flip([3])) is Decoding.BOT


def test_encode_structure_recovers_base_codewords(rng):
    scheme = AmplifiedScheme(PerfectScheme(6), 5, 1.0, 0.0)
    key, pk = scheme.keygen(rng)
    x = scheme.encode(pk, rng).to_array()
    blocks = x[key.perm].reshape(5, 6) ^ key.shifts
    assert not blocks.any()


def test_fresh_encodes_differ(rng):
    scheme = AmplifiedScheme(WEAK, 4, 0.8, 0.5)
    _, pk = scheme.keygen(rng)
    assert scheme.encode(pk, rng) != scheme.encode(pk, rng)


def test_decode_counts_votes(rng):
    scheme = AmplifiedScheme(PerfectScheme(4), 10, 0.8, 0.2)
    key, _ = scheme.keygen(rng)
    assert key.theta == 5
    def word(good):
        blocks = key.shifts.copy()
        blocks[good:] ^= 1
        out = np.empty(40, np.uint8)
        out[key.perm] = blocks.ravel()
        return BitString.from_bits(out)
    assert scheme.decode(key, word(10)) is Decoding.ONE
    assert scheme.decode(key, word(5)) is Decoding.ONE
    assert scheme.decode(key, word(4)) is Decoding.BOT
    assert scheme.decode(key, word(0)) is Decoding.BOT
    with pytest.raises(LengthError):
        scheme.decode(key, BitString.zeros(39))


def test_public_key_hides_base_secret(rng):
    scheme = AmplifiedScheme(WEAK, 3, 0.8, 0.5)
    key, pk = scheme.keygen(rng)
    assert pk.base_sk is None and key.base_sk is not None
    with pytest.raises(PreconditionError):
        scheme.decode_batch(pk, np.zeros((1, scheme.codeword_length()), np.uint8))


@pytest.mark.parametrize("base", [WEAK, HyperloopScheme(HyperloopParams(n=64, ell=2, m=100, t=3))])
def test_projection_matches_full_simulation(base):
    scheme = AmplifiedScheme(base, 25, 0.7, 0.5)
    rng = np.random.default_rng(21)
    key, pk = scheme.keygen(rng)
    channel = ChannelSpec("bsc", p=0.05)
    full = count_decodes(scheme, key, pk, channel, 4000, rng, project=False)
    proj = count_decodes(scheme, key, pk, channel, 4000, rng, project=True)
    se = math.sqrt(0.25 / 4000)
    assert abs(full.rate - proj.rate) < 5 * se
    X = scheme.encode_batch(pk, 50, rng)
    positions = scheme.read_set(key)
    assert np.array_equal(scheme.decode_batch(key, X), scheme.decode_batch(key, X[:, positions], positions=positions))


def test_amplified_round_trip_and_soundness():
    rng = RngStream(5).generator()
    cal = calibrate_alpha_delta(WEAK, ChannelSpec("bsc", p=0.02), 20_000, rng)
    scheme = AmplifiedScheme.sized(WEAK, cal)
    key, pk = scheme.keygen(rng)
    assert count_decodes(scheme, key, pk, ChannelSpec("bsc", p=0.02), 1000, rng).rate >= 0.99
    assert count_decodes(scheme, key, pk, None, 1000, rng, random_input=True).rate <= 0.01


def test_permutation_defeats_position_targeting():
    # An adversary flipping the pre-permutation read positions does no better
    # than one flipping random positions with the same budget.
    rng = RngStream(6).generator()
    scheme = AmplifiedScheme(WEAK, 40, 0.62, 0.5)
    key, pk = scheme.keygen(rng)
    n = WEAK.codeword_length()
    inner = WEAK.read_set(key.base_sk)
    targets = (np.arange(scheme.t)[:, None] * n + inner[None, :]).ravel()
    trials = 10_000
    targeted = count_decodes(scheme, key, pk, ChannelSpec("adv", p=0.1, strategy="parity-target", aux=tuple(targets.tolist())), trials, rng)
    random = count_decodes(scheme, key, pk, ChannelSpec("adv", p=0.1, strategy="random-flip"), trials, rng)
    pooled = (targeted.successes + random.successes) / (2 * trials)
    z = (targeted.rate - random.rate) / math.sqrt(2 * pooled * (1 - pooled) / trials)
    assert abs(z) < 3.3
    assert 0.05 < random.rate < 0.999  # the comparison is not saturated
