import numpy as np
import pytest
from scipy import stats

from prc.bits import BitString
from prc.channels import ChannelSpec, corrupt_batch
from prc.core import Decoding
from prc.errors import LengthError, ParameterError
from prc.warmup import (
    WarmupKey,
    WarmupParams,
    WarmupScheme,
    prf_eval,
    warmup_decode,
    warmup_encode,
    warmup_keygen,
)


def test_input_len_examples():
    assert WarmupParams(64, 16, 8).input_len == 24
    assert WarmupParams(64, 1, 1).input_len == 6
    assert WarmupParams(256, 25, 64).input_len == 40
    assert WarmupParams(64, 1, 3).codeword_length == 3 * 70


def test_param_validation():
    for args in [(1, 1, 1), (64, 0.5, 1), (64, 1, 0)]:
        with pytest.raises(ParameterError):
            WarmupParams(*args)


def test_keygen_deterministic():
    a = warmup_keygen(64, 16, 8, np.random.default_rng(1))
    b = warmup_keygen(64, 16, 8, np.random.default_rng(1))
    assert a == b
    assert WarmupKey.from_json(a.to_json()) == a


def test_prf_properties():
    k = bytes(range(16))
    x = np.array([1, 0, 1, 1, 0, 0], dtype=np.uint8)
    a = prf_eval(k, x, 300)
    assert a.shape == (300,) and set(np.unique(a)) <= {0, 1}
    assert (prf_eval(k, x, 300) == a).all()
    assert (prf_eval(k, x, 100) == a[:100]).all()
    assert (prf_eval(bytes(16), x, 300) != a).any()
    assert (prf_eval(k, x ^ np.eye(6, dtype=np.uint8)[0], 300) != a).any()


def test_single_block_layout(rng):
    key = warmup_keygen(64, 1, 1, rng)
    x = warmup_encode(key, rng).to_array()
    assert x.size == 70
    assert (x[6:] == prf_eval(key.k, x[:6], 64)).all()


def test_encodes_differ(rng):
    key = warmup_keygen(64, 16, 4, rng)
    assert warmup_encode(key, rng) != warmup_encode(key, rng)


def test_decode_examples(rng):
    key = warmup_keygen(256, 1, 1, rng)
    x = warmup_encode(key, rng)
    assert warmup_decode(key, x) is Decoding.ONE
    header = key.input_len
    assert warmup_decode(key, x.flip(range(header, header + 20))) is Decoding.ONE
    assert warmup_decode(key, x.flip(range(header, header + 25))) is Decoding.ONE
    assert warmup_decode(key, x.flip(range(header, header + 26))) is Decoding.BOT
    # one header bit is enough to destroy the only block
    assert warmup_decode(key, x.flip([0])) is Decoding.BOT
    with pytest.raises(LengthError):
        warmup_decode(key, BitString.zeros(10))


def _bsc_rate(p, trials, rng, n=256, tau=25, blocks=64):
    scheme = WarmupScheme(WarmupParams(n, tau, blocks))
    sk, pk = scheme.keygen(rng)
    X = corrupt_batch(ChannelSpec("bsc", p=p), scheme.encode_batch(pk, trials, rng), rng)
    return scheme.decode_batch(sk, X).mean()


def _block_survival(p, n=256, input_len=40):
    # header untouched and at most n/10 tag flips
    return (1 - p) ** input_len * stats.binom.cdf(n // 10, n, p)


def test_bsc_small_rate(rng):
    q = _block_survival(1 / 25)
    bound = 1 - (1 - q) ** 64
    assert bound > 0.9999
    assert _bsc_rate(1 / 25, 1000, rng) >= 0.95


def test_bsc_constant_rate_degrades(rng):
    low = _bsc_rate(1 / 25, 300, rng)
    high = _bsc_rate(0.2, 300, rng)
    q = _block_survival(0.2)
    assert 1 - (1 - q) ** 64 < 0.01
    assert high < 0.05 < 0.95 <= low


def test_random_input_bot(rng):
    scheme = WarmupScheme(WarmupParams(256, 25, 64))
    sk, _ = scheme.keygen(rng)
    X = rng.integers(0, 2, size=(2000, scheme.codeword_length()), dtype=np.uint8)
    assert 1 - scheme.decode_batch(sk, X).mean() >= 0.999


def test_scheme_json(rng):
    scheme = WarmupScheme(WarmupParams(64, 4, 3))
    sk, pk = scheme.keygen(rng)
    sk2, pk2 = scheme.key_from_json(scheme.key_to_json(sk, pk))
    assert sk2 == sk == pk2
    with pytest.raises(ParameterError):
        scheme.decode_batch(sk, np.zeros((1, 2), dtype=np.uint8), np.array([0, 1]))
