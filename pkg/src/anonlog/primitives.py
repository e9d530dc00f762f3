"""Keyed, deterministic field-level anonymization primitives.

All keyed primitives are pure functions of (key, namespace or stream id,
input): there are no mapping tables, so records can be processed in any
order and on any number of workers with identical results.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from array import array
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .record import (
    ABSENT,
    CLASS_TAG,
    FieldClass,
    FieldValue,
    LogStream,
    MAX_ADDRESS,
    Tag,
)

KEY_BYTES = 32
USEC = 1_000_000
SHIFT_RANGE_US = 365 * 86400 * USEC
DEFAULT_PORT_BOUNDARY = 1024
PSEUDONYM_HEX_CHARS = 32


@dataclass(frozen=True)
class AnonKey:
    """256 bits of secret material plus a human-readable id."""

    material: bytes = field(repr=False)
    key_id: str = "default"

    def __post_init__(self) -> None:
        if not isinstance(self.material, bytes) or len(self.material) != KEY_BYTES:
            raise ValueError("AnonKey needs exactly 32 bytes of material")

    @classmethod
    def generate(cls, key_id: str = "default") -> "AnonKey":
        return cls(secrets.token_bytes(KEY_BYTES), key_id)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.material).hexdigest()

    def subkey(self, label: str) -> bytes:
        """Independent 32-byte key for one primitive."""
        return _subkey(self.material, label)

    def for_stream(self, stream_id: str) -> "AnonKey":
        """Salt the key with a stream id (per-stream consistency scope)."""
        return AnonKey(self.subkey("stream:" + stream_id), f"{self.key_id}@{stream_id}")


@lru_cache(maxsize=1024)
def _subkey(material: bytes, label: str) -> bytes:
    return hmac.digest(material, b"anonlog/" + label.encode(), hashlib.sha256)


# -- pseudorandom function plug-ins -------------------------------------------
#
# A PRF maps a sequence of 16-byte blocks to 16-byte outputs. Only the
# block-batch interface is required, so alternative functions can be
# registered without touching the permutations built on top.

class AesPrf:
    name = "aes"

    def __init__(self, key: bytes):
        self._enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()

    def blocks(self, data: bytes) -> bytes:
        return self._enc.update(data)


class HmacPrf:
    name = "hmac-sha256"

    def __init__(self, key: bytes):
        self._key = key

    def blocks(self, data: bytes) -> bytes:
        k = self._key
        return b"".join(
            hmac.digest(k, data[i:i + 16], hashlib.sha256)[:16]
            for i in range(0, len(data), 16)
        )


PRF_PLUGINS: dict[str, Callable[[bytes], object]] = {
    AesPrf.name: AesPrf,
    HmacPrf.name: HmacPrf,
}


def make_prf(name: str, key: bytes):
    try:
        return PRF_PLUGINS[name](key)
    except KeyError:
        raise ValueError(f"unknown PRF plug-in {name!r}") from None


# -- prefix-preserving permutation --------------------------------------------

_PAD = bytes(11)


def _prefix_block(addr: int, length: int) -> bytes:
    """Encode the first ``length`` bits of ``addr`` as one PRF input block."""
    prefix = addr >> (32 - length) << (32 - length) if length else 0
    return prefix.to_bytes(4, "big") + bytes((length,)) + _PAD


_MASKS = [((0xFFFFFFFF << (32 - n)) & 0xFFFFFFFF if n else 0, bytes((n,)) + _PAD)
          for n in range(32)]


class PrefixPreservingPermutation:
    """Table-free prefix-preserving permutation of the IPv4 space.

    Output bit i is input bit i XOR the low bit of F(first i-1 input bits),
    for i = 1..32. All 32 PRF inputs depend only on the input address, so
    they are evaluated in one batch.
    """

    def __init__(self, key: AnonKey, prf: str = "aes"):
        self._prf = make_prf(prf, key.subkey("prefix-preserving/" + prf))
        self.anonymize = lru_cache(maxsize=1 << 16)(self._anonymize)

    def flip_bits(self, addr: int) -> int:
        """The 32-bit mask XORed onto ``addr``."""
        data = b"".join([(addr & m).to_bytes(4, "big") + tail for m, tail in _MASKS])
        out = self._prf.blocks(data)
        mask = 0
        for n in range(32):
            mask = (mask << 1) | (out[16 * n + 15] & 1)
        return mask

    def _anonymize(self, addr: int) -> int:
        return addr ^ self.flip_bits(addr)

    def __call__(self, addr: int) -> int:
        return self.anonymize(addr)


@lru_cache(maxsize=64)
def _pp_for(material: bytes, key_id: str, prf: str) -> PrefixPreservingPermutation:
    return PrefixPreservingPermutation(AnonKey(material, key_id), prf)


def pp_anonymize(addr: int, key: AnonKey, prf: str = "aes") -> int:
    if not 0 <= addr <= MAX_ADDRESS:
        raise ValueError(f"address out of range: {addr}")
    return _pp_for(key.material, key.key_id, prf)(addr)


# -- small-domain keyed permutations --------------------------------------------

class FeistelPermutation:
    """Keyed bijection on ``[0, size)`` for ``size <= 2**bits``.

    Balanced Feistel network over ``bits`` (even) with PRF-derived round
    tables; domains smaller than ``2**bits`` are handled by cycle walking.
    """

    ROUNDS = 10

    def __init__(self, key: bytes, bits: int, size: Optional[int] = None, label: str = ""):
        if bits % 2 or not 2 <= bits <= 32:
            raise ValueError("bits must be even and in [2, 32]")
        self.bits = bits
        self.size = 1 << bits if size is None else size
        if not 1 <= self.size <= 1 << bits:
            raise ValueError("domain size does not fit")
        self._half = bits // 2
        self._mask = (1 << self._half) - 1
        self._key = hmac.digest(key, b"feistel/" + label.encode() + bytes((bits,)), hashlib.sha256)
        self._tables: Optional[list[array]] = None

    def _build_tables(self) -> list[array]:
        prf = AesPrf(self._key)
        n = 1 << self._half
        tables = []
        for r in range(self.ROUNDS):
            data = b"".join(
                bytes((r,)) + x.to_bytes(4, "big") + bytes(11) for x in range(n)
            )
            out = prf.blocks(data)
            hi = out[0::16]
            lo = out[1::16]
            tables.append(array("I", (((a << 8) | b) & self._mask for a, b in zip(hi, lo))))
        return tables

    def _round_trip(self, x: int) -> int:
        t = self._tables
        if t is None:
            t = self._tables = self._build_tables()
        h, m = self._half, self._mask
        left, right = x >> h, x & m
        for table in t:
            left, right = right, left ^ table[right]
        return (left << h) | right

    def __call__(self, x: int) -> int:
        if not 0 <= x < self.size:
            raise ValueError(f"input {x} outside permutation domain [0, {self.size})")
        y = self._round_trip(x)
        while y >= self.size:
            y = self._round_trip(y)
        return y

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_tables"] = None
        return state


@lru_cache(maxsize=64)
def _feistel_for(material: bytes, label: str, bits: int, size: int) -> FeistelPermutation:
    return FeistelPermutation(material, bits, size, label)


def address_permute(addr: int, key: AnonKey) -> int:
    """Keyed bijection of the IPv4 space with no prefix structure."""
    return _feistel_for(key.subkey("address-permute"), "address", 32, 1 << 32)(addr)


def port_permute(p: int, key: AnonKey) -> int:
    """Keyed bijection of the full 16-bit port space."""
    return _feistel_for(key.subkey("port-permute"), "port", 16, 1 << 16)(p)


def port_bilateral(p: int, key: AnonKey, boundary: int = DEFAULT_PORT_BOUNDARY) -> int:
    """Keep well-known ports, permute ``[boundary, 65535]`` onto itself."""
    if not 0 <= p <= 0xFFFF:
        raise ValueError(f"port out of range: {p}")
    if p < boundary:
        return p
    perm = _feistel_for(key.subkey(f"port-bilateral/{boundary}"), "bilateral", 16, 65536 - boundary)
    return boundary + perm(p - boundary)


# -- truncation and black marker ------------------------------------------------

def truncate(addr: int, n: int) -> int:
    if not 0 <= n <= 32:
        raise ValueError(f"prefix length out of range: {n}")
    if n == 0:
        return 0
    return addr >> (32 - n) << (32 - n)


_BLACK = {
    Tag.ADDRESS: 0,
    Tag.PORT: 0,
    Tag.TIMESTAMP: 0,
    Tag.TEXT: ABSENT,
    Tag.COUNT: 0,
}


def black_mark(fv: FieldValue) -> FieldValue:
    return FieldValue(fv.cls, _BLACK[CLASS_TAG[fv.cls]])


# -- pseudonyms -------------------------------------------------------------

def keyed_pseudonym(value: str, key: AnonKey, ns: str) -> str:
    """32 lowercase hex chars from HMAC-SHA256 over (namespace, value)."""
    msg = ns.encode() + b"\x00" + value.encode()
    return hmac.digest(key.subkey("pseudonym"), msg, hashlib.sha256).hex()[:PSEUDONYM_HEX_CHARS]


# -- timestamps -------------------------------------------------------------

@lru_cache(maxsize=1024)
def shift_offset(key: AnonKey, stream_id: str) -> int:
    """Per-(key, stream) offset in microseconds, uniform in +/- 365 days."""
    h = hmac.digest(key.subkey("ts-shift"), stream_id.encode(), hashlib.sha256)
    return int.from_bytes(h[:8], "big") % (2 * SHIFT_RANGE_US + 1) - SHIFT_RANGE_US


def ts_shift(t: int, key: AnonKey, stream_id: str) -> tuple[int, bool]:
    """Shift ``t`` by the stream's offset.

    Returns ``(shifted, saturated)``; results before the epoch are clamped
    to 0 and flagged.
    """
    s = t + shift_offset(key, stream_id)
    if s < 0:
        return 0, True
    return s, False


UNITS_US = {
    "second": USEC,
    "minute": 60 * USEC,
    "hour": 3600 * USEC,
    "day": 86400 * USEC,
}


def ts_reduce_precision(t: int, unit: str) -> int:
    try:
        step = UNITS_US[unit]
    except KeyError:
        raise ValueError(f"unknown unit {unit!r}") from None
    return t - t % step


def enumerate_ranks(values: Iterable[int]) -> list[int]:
    """1-based ranks of ``values`` by value, ties broken by position."""
    vals = list(values)
    order = sorted(range(len(vals)), key=vals.__getitem__)
    ranks = [0] * len(vals)
    for rank, i in enumerate(order, 1):
        ranks[i] = rank
    return ranks


def ts_enumerate(stream: LogStream) -> LogStream:
    """Replace every timestamp by epoch + rank seconds.

    Ranks are taken jointly over all timestamp fields of the stream in
    (value, record, field) order, so the relative order of every pair of
    timestamps survives while all spacing is destroyed.
    """
    positions = []
    values = []
    for ri, rec in enumerate(stream.records):
        for name, fv in rec.fields:
            if fv.cls is FieldClass.TIMESTAMP:
                positions.append((ri, name))
                values.append(fv.value)
    ranks = enumerate_ranks(values)
    updates: dict[int, dict[str, int]] = {}
    for (ri, name), rank in zip(positions, ranks):
        updates.setdefault(ri, {})[name] = rank * USEC
    return stream.with_records(
        rec.replace(updates.get(ri, {})) for ri, rec in enumerate(stream.records)
    )
