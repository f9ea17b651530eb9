import numpy as np
import pytest

from corrsketch import ecc


@pytest.fixture(scope="module")
def cb16():
    return ecc.for_index_space(1 << 16)


def test_blocklength_selection_table():
    # smallest configured blocklength whose message capacity covers the index bits
    assert ecc.for_index_space(4).blocklen == 15
    assert ecc.for_index_space(32).blocklen == 15
    assert ecc.for_index_space(64).blocklen == 31
    assert ecc.for_index_space(2048).blocklen == 31
    assert ecc.for_index_space(1 << 12).blocklen == 63
    assert ecc.for_index_space(1 << 16).blocklen == 63
    assert ecc.for_index_space(1 << 20).blocklen == 127


def test_error_fraction_at_least_15_percent():
    for n in (4, 64, 4096, 1 << 16, 1 << 20):
        cb = ecc.for_index_space(n)
        assert cb.error_fraction >= 0.15
        assert cb.n_correctable == int(cb.error_fraction * cb.blocklen)


def test_codeword_length_logarithmic():
    for exp in range(2, 21):
        n = 1 << exp
        cb = ecc.for_index_space(n)
        assert cb.blocklen <= 10 * exp, f"n=2^{exp}: len {cb.blocklen}"


def test_roundtrip_and_injectivity_n4096():
    cb = ecc.for_index_space(4096)
    table = cb.bit_matrix()
    assert table.shape == (4096, cb.blocklen)
    assert len(np.unique(table, axis=0)) == 4096  # injective
    decoded = cb.decode_words(table)
    assert np.array_equal(decoded, np.arange(4096))


def test_encode_bounds():
    cb = ecc.for_index_space(16)
    with pytest.raises(IndexError):
        cb.encode(16)
    with pytest.raises(IndexError):
        cb.encode(-1)
    with pytest.raises(IndexError):
        cb.mask_bit(cb.blocklen, 3)


def test_decode_rejects_wrong_length(cb16):
    with pytest.raises(ValueError):
        cb16.decode(np.zeros(cb16.blocklen + 1, dtype=np.uint8))


def test_decode_within_radius(cb16, rng):
    word = cb16.encode(7)
    radius = cb16.n_correctable
    for _ in range(500):
        w = word.copy()
        flips = rng.choice(cb16.blocklen, size=radius, replace=False)
        w[flips] ^= 1
        assert cb16.decode(w) == 7


def test_decode_failure_is_explicit(cb16):
    # the all-ones word is a codeword of a message outside [n]
    assert cb16.decode(np.ones(cb16.blocklen, dtype=np.uint8)) is None


def test_minimum_distance_sampled(cb16, rng):
    # d_min = 2t + 1 by design; sample pairs at n = 2^16
    table = cb16.bit_matrix()
    lo = 2 * cb16.n_correctable + 1
    idx = rng.integers(0, cb16.n, size=(10_000, 2))
    idx = idx[idx[:, 0] != idx[:, 1]]
    dist = np.abs(table[idx[:, 0]].astype(int) - table[idx[:, 1]].astype(int)).sum(axis=1)
    assert dist.min() >= lo


def test_mask_bit_consistency():
    cb = ecc.for_index_space(256)
    for i in (0, 1, 17, 255):
        word = cb.encode(i)
        bits = [cb.mask_bit(l, i) for l in range(cb.blocklen)]
        assert np.array_equal(bits, word)
        assert sum(bits) == int(word.sum())


def test_bit_table_matches_per_index_encoding():
    cb = ecc.for_index_space(256)
    table = cb.bit_matrix()
    for i in range(256):
        assert np.array_equal(table[i], cb.encode(i))


def test_determinism_across_instances():
    a = ecc.Codebook(512, 5, 5)
    b = ecc.Codebook(512, 5, 5)
    assert a.generator == b.generator
    assert np.array_equal(a.bit_matrix(), b.bit_matrix())


def test_beyond_radius_never_corrupts_within_radius(cb16, rng):
    # one flip past the radius may fail or land in a different ball (both
    # fine); dropping back inside the radius must always give the truth
    word = cb16.encode(12345)
    t = cb16.n_correctable
    for _ in range(200):
        flips = rng.choice(cb16.blocklen, size=t + 1, replace=False)
        w = word.copy()
        w[flips] ^= 1
        cb16.decode(w)  # any outcome but a crash is acceptable
        w2 = word.copy()
        w2[flips[:t]] ^= 1
        assert cb16.decode(w2) == 12345


def test_batch_decode_matches_scalar(cb16, rng):
    words = []
    expect = []
    for _ in range(64):
        i = int(rng.integers(cb16.n))
        w = cb16.encode(i)
        nflips = int(rng.integers(0, cb16.n_correctable + 1))
        if nflips:
            w[rng.choice(cb16.blocklen, size=nflips, replace=False)] ^= 1
        words.append(w)
        expect.append(i)
    words.append(np.ones(cb16.blocklen, dtype=np.uint8))
    expect.append(-1)
    got = cb16.decode_words(np.stack(words))
    assert np.array_equal(got, expect)


def test_zero_word_decodes_to_index_zero(cb16):
    # index 0 encodes to the zero codeword; recovery drops the (0, 0) diagonal
    assert not np.any(cb16.encode(0))
    assert cb16.decode(np.zeros(cb16.blocklen, dtype=np.uint8)) == 0
