import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psalign.crypto import (TAG_H_BASE, TAG_H_OUT, Gf128Multiplier, RandomSource, ShareVector, array_to_ints,
                            gf128_from_bytes, gf128_mul, gf128_to_bytes, ints_to_array, prf_mmo, prf_mmo_array,
                            prf_mmo_batch, random_oracle_to_field, reveal, share_split, share_split_array)

field = st.integers(min_value=0, max_value=(1 << 128) - 1)


def schoolbook_mul(a, b):
    """Independent oracle: bit-list polynomial product, then long division."""
    pa = [(a >> i) & 1 for i in range(128)]
    pb = [(b >> i) & 1 for i in range(128)]
    prod = [0] * 255
    for i, x in enumerate(pa):
        if x:
            for j, y in enumerate(pb):
                prod[i + j] ^= y
    modulus = {128, 7, 2, 1, 0}
    for deg in range(254, 127, -1):
        if prod[deg]:
            for t in modulus:
                prod[deg - 128 + t] ^= 1
    return sum(bit << i for i, bit in enumerate(prod[:128]))


def test_gf_identity_and_zero():
    rng = RandomSource.from_int(1)
    for _ in range(100):
        a = rng.field()
        assert gf128_mul(a, 1) == a
        assert gf128_mul(a, 0) == 0


def test_gf_against_schoolbook():
    rng = RandomSource.from_int(2)
    for _ in range(200):
        a, b = rng.field(), rng.field()
        assert gf128_mul(a, b) == schoolbook_mul(a, b)


def test_gf_reduction_of_x127_times_x():
    # x^128 = x^7 + x^2 + x + 1
    assert gf128_mul(1 << 127, 2) == 0x87


def test_gf_distributive_10k():
    rng = RandomSource.from_int(3)
    for _ in range(10_000):
        a, b, c = rng.field(), rng.field(), rng.field()
        assert gf128_mul(a, b ^ c) == gf128_mul(a, b) ^ gf128_mul(a, c)


@settings(max_examples=200, deadline=None)
@given(field, field, field)
def test_gf_ring_laws(a, b, c):
    assert gf128_mul(a, b) == gf128_mul(b, a)
    assert gf128_mul(gf128_mul(a, b), c) == gf128_mul(a, gf128_mul(b, c))


@settings(max_examples=50, deadline=None)
@given(field, st.lists(field, min_size=1, max_size=20))
def test_table_multiplier_matches_scalar(c, xs):
    mul = Gf128Multiplier(c)
    assert [mul.mul(x) for x in xs] == [gf128_mul(x, c) for x in xs]
    assert array_to_ints(mul.mul_array(ints_to_array(xs))) == [gf128_mul(x, c) for x in xs]


def test_field_bytes_roundtrip():
    assert gf128_to_bytes(1) == b"\x01" + bytes(15)
    assert gf128_from_bytes(gf128_to_bytes(0xABCDEF << 90)) == 0xABCDEF << 90
    with pytest.raises(ValueError):
        gf128_from_bytes(b"short")


def test_mmo_zero_vector_matches_aes_known_answer():
    # AES-128 encryption of the zero block under the zero key
    assert prf_mmo(bytes(16), bytes(16)).hex() == "66e94bd4ef8a2c3b884cfa59ca342b2e"


def test_mmo_deterministic_and_padding_distinguishes_lengths():
    key = bytes(range(16))
    assert prf_mmo(key, b"abc") == prf_mmo(key, b"abc")
    assert prf_mmo(key, b"abc") != prf_mmo(key, b"abc\x00")
    assert len(prf_mmo(key, b"x" * 100)) == 16
    assert prf_mmo(key, b"") != prf_mmo(key, b"\x80")  # 10* padding keeps these apart


def test_mmo_batch_matches_single():
    key = os.urandom(16)
    msgs = [os.urandom(n) for n in (0, 1, 15, 16, 17, 64)]
    assert prf_mmo_batch(key, msgs) == [prf_mmo(key, m) for m in msgs]
    arr = prf_mmo_array(key, msgs)
    assert [bytes(r) for r in arr.view(np.uint8).reshape(-1, 16)] == prf_mmo_batch(key, msgs)


def test_mmo_no_collisions_on_a_million_inputs():
    key = bytes(16)
    msgs = [i.to_bytes(8, "little") for i in range(1_000_000)]
    out = prf_mmo_array(key, msgs)
    assert len(np.unique(out, axis=0)) == len(msgs)


def test_mmo_key_length_checked():
    with pytest.raises(ValueError):
        prf_mmo(b"short", b"m")


def test_random_oracle_domain_separation():
    rng = RandomSource.from_int(4)
    assert random_oracle_to_field(TAG_H_BASE, b"") == random_oracle_to_field(TAG_H_BASE, b"")
    for _ in range(10_000):
        m = rng.bytes(12)
        assert random_oracle_to_field(TAG_H_BASE, m) != random_oracle_to_field(TAG_H_OUT, m)


def test_random_source_determinism():
    a, b = RandomSource(bytes(32)), RandomSource(bytes(32))
    assert a.bytes(100) == b.bytes(100)
    assert a.permutation(50) == b.permutation(50)
    assert RandomSource().bytes(32) != RandomSource().bytes(32)
    with pytest.raises(ValueError):
        RandomSource(b"too short")


def test_share_split_roundtrip():
    rng = RandomSource.from_int(5)
    for _ in range(1000):
        x = rng.bytes(rng.randbelow(40))
        s1, s2 = share_split(x, rng)
        assert reveal(s1, s2) == x
    s1, s2 = share_split(bytes(16), rng)
    assert s1 == s2


def test_share_bits_are_balanced():
    rng = RandomSource.from_int(6)
    x = np.full((10_000, 4), 0xA5, dtype=np.uint8)
    s1, s2 = share_split_array(x, rng)
    assert (s1 ^ s2 == x).all()
    ones = np.unpackbits(s1, axis=1).sum(axis=0).astype(np.int64)
    sigma = (10_000 * 0.25) ** 0.5
    assert (abs(ones - 5000) < 3 * sigma + 1).all()


def test_share_vector_shapes():
    a = ShareVector(np.zeros((3, 4), np.uint8))
    b = ShareVector(np.ones((3, 4), np.uint8))
    assert a.width_bytes == 4 and len(a) == 3
    assert (a.reveal(b) == 1).all()
    with pytest.raises(ValueError):
        a.reveal(ShareVector(np.zeros((2, 4), np.uint8)))
