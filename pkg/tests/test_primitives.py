import hashlib
import hmac
import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings, strategies as st

from anonlog.primitives import (
    SHIFT_RANGE_US,
    USEC,
    AnonKey,
    FeistelPermutation,
    HmacPrf,
    PRF_PLUGINS,
    PrefixPreservingPermutation,
    address_permute,
    black_mark,
    enumerate_ranks,
    keyed_pseudonym,
    port_bilateral,
    port_permute,
    pp_anonymize,
    shift_offset,
    truncate,
    ts_reduce_precision,
    ts_shift,
)
from anonlog.record import ABSENT, FieldClass, FieldValue, lcp32

addresses = st.integers(0, 2**32 - 1)
K = AnonKey(bytes(range(32)), "t")


def lcp_oracle(x, y):
    """Common leading characters of the 32-char binary renderings."""
    a, b = format(x, "032b"), format(y, "032b")
    n = 0
    while n < 32 and a[n] == b[n]:
        n += 1
    return n


def pp_oracle(addr, key):
    """Bit-at-a-time reference: one AES call per output bit."""
    sub = hmac.new(key.material, b"anonlog/prefix-preserving/aes", hashlib.sha256).digest()
    bits = format(addr, "032b")
    out = ""
    for i in range(32):
        prefix = int(bits[:i].ljust(32, "0"), 2)
        block = prefix.to_bytes(4, "big") + bytes([i]) + bytes(11)
        enc = Cipher(algorithms.AES(sub), modes.ECB()).encryptor()
        flip = enc.update(block)[15] & 1
        out += str(int(bits[i]) ^ flip)
    return int(out, 2)


@given(addresses, addresses)
def test_lcp32_matches_string_oracle(x, y):
    assert lcp32(x, y) == lcp_oracle(x, y)


@settings(max_examples=60, deadline=None)
@given(addresses)
def test_pp_matches_bitwise_reference(a):
    assert pp_anonymize(a, K) == pp_oracle(a, K)


def test_pp_frozen_values():
    assert pp_anonymize(0x7F000001, K) == 0x412E4348
    assert pp_anonymize(0xC0A84D1D, K) == 0xA62169F0


@given(addresses, addresses)
def test_pp_preserves_prefix_length(x, y):
    assert lcp_oracle(pp_anonymize(x, K), pp_anonymize(y, K)) == lcp_oracle(x, y)


def test_pp_hmac_plugin_is_prefix_preserving():
    assert "hmac-sha256" in PRF_PLUGINS
    rng = random.Random(5)
    for _ in range(300):
        x, y = rng.getrandbits(32), rng.getrandbits(32)
        ax, ay = pp_anonymize(x, K, "hmac-sha256"), pp_anonymize(y, K, "hmac-sha256")
        assert lcp_oracle(ax, ay) == lcp_oracle(x, y)
    assert pp_anonymize(1, K, "hmac-sha256") != pp_anonymize(1, K)


def test_pp_key_sensitivity():
    other = AnonKey(bytes(32), "z")
    a = [pp_anonymize(x, K) for x in range(0, 2**32, 2**24)]
    b = [pp_anonymize(x, other) for x in range(0, 2**32, 2**24)]
    assert a != b


def test_pp_rejects_out_of_range():
    with pytest.raises(ValueError):
        pp_anonymize(2**32, K)
    with pytest.raises(ValueError):
        pp_anonymize(-1, K)


def test_hmac_prf_block_batch():
    prf = HmacPrf(b"k" * 32)
    data = bytes(range(48))
    out = prf.blocks(data)
    assert len(out) == 48
    assert out[16:32] == hmac.digest(b"k" * 32, data[16:32], hashlib.sha256)[:16]


@pytest.mark.parametrize("bits", [2, 4, 8, 10])
def test_feistel_is_bijection_exhaustive(bits):
    perm = FeistelPermutation(b"x" * 32, bits)
    assert sorted(perm(x) for x in range(1 << bits)) == list(range(1 << bits))


@pytest.mark.parametrize("size", [1, 3, 100, 1000])
def test_feistel_cycle_walking_stays_in_domain(size):
    perm = FeistelPermutation(b"y" * 32, 10, size)
    assert sorted(perm(x) for x in range(size)) == list(range(size))


def test_feistel_rejects_bad_domains():
    with pytest.raises(ValueError):
        FeistelPermutation(b"k", 7)
    with pytest.raises(ValueError):
        FeistelPermutation(b"k", 8, 257)
    with pytest.raises(ValueError):
        FeistelPermutation(b"k", 8)(256)


def test_port_permute_exhaustive():
    assert sorted(port_permute(p, K) for p in range(65536)) == list(range(65536))
    assert port_permute(80, K) == 34567


def test_port_bilateral_fixes_low_ports_and_permutes_high():
    assert all(port_bilateral(p, K) == p for p in range(1024))
    high = [port_bilateral(p, K) for p in range(1024, 65536)]
    assert sorted(high) == list(range(1024, 65536))
    assert port_bilateral(8080, K) == 49670


@given(st.integers(1, 65535), st.integers(0, 65535))
def test_port_bilateral_custom_boundary(boundary, p):
    q = port_bilateral(p, K, boundary)
    assert (q == p) if p < boundary else boundary <= q <= 65535


def test_port_bilateral_range_error():
    with pytest.raises(ValueError):
        port_bilateral(65536, K)


@settings(max_examples=50, deadline=None)
@given(addresses, addresses)
def test_address_permute_injective_on_samples(x, y):
    if x != y:
        assert address_permute(x, K) != address_permute(y, K)


def test_truncate():
    a = 0xC0A84D1D
    assert truncate(a, 0) == 0
    assert truncate(a, 16) == 0xC0A80000
    assert truncate(a, 24) == 0xC0A84D00
    assert truncate(a, 32) == a
    with pytest.raises(ValueError):
        truncate(a, 33)


@given(addresses, st.integers(0, 32))
def test_truncate_keeps_exactly_top_bits(a, n):
    t = truncate(a, n)
    assert lcp_oracle(a, t) >= n
    assert t & ((1 << (32 - n)) - 1) == 0


def test_black_marker_constants():
    assert black_mark(FieldValue(FieldClass.IPV4_SRC, 5)).value == 0
    assert black_mark(FieldValue(FieldClass.PORT_DST, 80)).value == 0
    assert black_mark(FieldValue(FieldClass.USER_ID, "emily")).value == ABSENT
    assert black_mark(FieldValue(FieldClass.TIMESTAMP, 10)).value == 0


def test_keyed_pseudonym_shape_and_namespacing():
    p = keyed_pseudonym("emily", K, "authuser")
    assert p == "9f2ee3e9445db637bf92c4bd476f8e16"
    assert len(p) == 32 and all(c in "0123456789abcdef" for c in p)
    assert keyed_pseudonym("emily", K, "ident") != p
    expected = hmac.new(K.subkey("pseudonym"), b"authuser\x00emily", hashlib.sha256).hexdigest()[:32]
    assert p == expected


@given(st.text(), st.text())
def test_pseudonym_injective_on_samples(a, b):
    if a != b:
        assert keyed_pseudonym(a, K, "n") != keyed_pseudonym(b, K, "n")


def test_shift_offset_range_and_stream_dependence():
    offs = {shift_offset(K, f"s{i}") for i in range(200)}
    assert len(offs) == 200
    assert all(-SHIFT_RANGE_US <= o <= SHIFT_RANGE_US for o in offs)
    assert shift_offset(K, "s") == 17121211278419


@given(st.integers(0, 2**50), st.integers(0, 2**50))
def test_ts_shift_preserves_differences(a, b):
    lo = SHIFT_RANGE_US
    (sa, ca), (sb, cb) = ts_shift(a + lo, K, "x"), ts_shift(b + lo, K, "x")
    assert not ca and not cb
    assert sa - sb == a - b


def test_ts_shift_saturates_at_epoch():
    off = shift_offset(K, "neg")
    key_stream = "neg"
    if off >= 0:
        key_stream = next(s for s in (f"n{i}" for i in range(100)) if shift_offset(K, s) < 0)
    assert ts_shift(0, K, key_stream) == (0, True)


@given(st.integers(0, 2**50), st.sampled_from(["second", "minute", "hour", "day"]))
def test_reduce_precision_idempotent_and_floor(t, unit):
    r = ts_reduce_precision(t, unit)
    assert r <= t
    assert ts_reduce_precision(r, unit) == r
    assert t - r < {"second": 1, "minute": 60, "hour": 3600, "day": 86400}[unit] * USEC


@given(st.lists(st.integers(0, 50)))
def test_enumerate_ranks_is_order_isomorphic(values):
    ranks = enumerate_ranks(values)
    assert sorted(ranks) == list(range(1, len(values) + 1))
    for i in range(len(values)):
        for j in range(len(values)):
            if values[i] < values[j]:
                assert ranks[i] < ranks[j]


def test_anon_key_validation_and_digest():
    with pytest.raises(ValueError):
        AnonKey(b"short")
    assert K.digest == hashlib.sha256(bytes(range(32))).hexdigest()
    assert K.for_stream("a").material != K.for_stream("b").material
    assert AnonKey.generate().material != AnonKey.generate().material


def test_feistel_pickles_without_tables():
    import pickle
    perm = FeistelPermutation(b"z" * 32, 8)
    before = perm(7)
    clone = pickle.loads(pickle.dumps(perm))
    assert clone._tables is None and clone(7) == before
