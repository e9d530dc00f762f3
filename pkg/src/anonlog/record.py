"""Canonical record model shared by parsers, primitives and policies.

A parsed line becomes a :class:`LogRecord`: an ordered tuple of named,
classified :class:`FieldValue` objects plus a :class:`Template` holding the
literal text between fields, so the original line can be re-emitted byte for
byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional


class FieldClass(str, Enum):
    IPV4_SRC = "ipv4-src"
    IPV4_DST = "ipv4-dst"
    IPV4_OTHER = "ipv4-other"
    PORT_SRC = "port-src"
    PORT_DST = "port-dst"
    TIMESTAMP = "timestamp"
    HOSTNAME = "hostname"
    USER_ID = "user-id"
    PROTOCOL = "protocol"
    COUNT = "count"
    STATUS_CODE = "status-code"
    FREE_TEXT = "free-text"
    OPAQUE = "opaque"

    def __str__(self) -> str:
        return self.value


class Tag(str, Enum):
    """Payload kind carried by a field; fixed by the field's class."""

    ADDRESS = "address"
    PORT = "port"
    TIMESTAMP = "timestamp"
    TEXT = "text"
    COUNT = "count"


CLASS_TAG: dict[FieldClass, Tag] = {
    FieldClass.IPV4_SRC: Tag.ADDRESS,
    FieldClass.IPV4_DST: Tag.ADDRESS,
    FieldClass.IPV4_OTHER: Tag.ADDRESS,
    FieldClass.PORT_SRC: Tag.PORT,
    FieldClass.PORT_DST: Tag.PORT,
    FieldClass.TIMESTAMP: Tag.TIMESTAMP,
    FieldClass.HOSTNAME: Tag.TEXT,
    FieldClass.USER_ID: Tag.TEXT,
    FieldClass.PROTOCOL: Tag.TEXT,
    FieldClass.COUNT: Tag.COUNT,
    FieldClass.STATUS_CODE: Tag.COUNT,
    FieldClass.FREE_TEXT: Tag.TEXT,
    FieldClass.OPAQUE: Tag.TEXT,
}

ADDRESS_CLASSES = frozenset(c for c, t in CLASS_TAG.items() if t is Tag.ADDRESS)
PORT_CLASSES = frozenset(c for c, t in CLASS_TAG.items() if t is Tag.PORT)

MAX_ADDRESS = 0xFFFFFFFF
MAX_PORT = 0xFFFF
MAX_COUNT = 2**64 - 1

# Text value meaning "not present" in the native format; never pseudonymized.
ABSENT = "-"


@dataclass(frozen=True, slots=True)
class FieldValue:
    """A classified field payload.

    Addresses are 32-bit ints, timestamps are integer microseconds since the
    UTC epoch, ports and counts are ints, everything else is ``str``.
    """

    cls: FieldClass
    value: object

    def __post_init__(self) -> None:
        tag = CLASS_TAG[self.cls]
        v = self.value
        if tag is Tag.TEXT:
            if not isinstance(v, str):
                raise TypeError(f"{self.cls} requires a text payload, got {type(v).__name__}")
            return
        if not isinstance(v, int) or isinstance(v, bool):
            raise TypeError(f"{self.cls} requires an integer payload, got {type(v).__name__}")
        if tag is Tag.ADDRESS and not 0 <= v <= MAX_ADDRESS:
            raise ValueError(f"address out of range: {v}")
        if tag is Tag.PORT and not 0 <= v <= MAX_PORT:
            raise ValueError(f"port out of range: {v}")
        if tag is Tag.COUNT and not 0 <= v <= MAX_COUNT:
            raise ValueError(f"count out of range: {v}")
        if tag is Tag.TIMESTAMP and v < 0:
            raise ValueError(f"timestamp before epoch: {v}")

    @property
    def tag(self) -> Tag:
        return CLASS_TAG[self.cls]


@dataclass(frozen=True, slots=True)
class Slot:
    """Where a field sits in the original line and how it was written."""

    name: str
    text: str
    value: FieldValue
    style: object = None


@dataclass(frozen=True, slots=True)
class Template:
    """``literals[0] slot[0] literals[1] ... slot[n-1] literals[n]``."""

    literals: tuple[str, ...]
    slots: tuple[Slot, ...]

    def __post_init__(self) -> None:
        if len(self.literals) != len(self.slots) + 1:
            raise ValueError("template needs exactly one more literal than slots")


@dataclass(frozen=True, slots=True)
class LogRecord:
    schema_id: str
    fields: tuple[tuple[str, FieldValue], ...]
    template: Template

    def __post_init__(self) -> None:
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in record: {names}")

    def __iter__(self) -> Iterator[tuple[str, FieldValue]]:
        return iter(self.fields)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def get(self, name: str) -> Optional[FieldValue]:
        for n, fv in self.fields:
            if n == name:
                return fv
        return None

    def __getitem__(self, name: str) -> FieldValue:
        fv = self.get(name)
        if fv is None:
            raise KeyError(name)
        return fv

    def of_class(self, *classes: FieldClass) -> list[tuple[str, FieldValue]]:
        return [(n, fv) for n, fv in self.fields if fv.cls in classes]

    def replace(self, updates: Mapping[str, object]) -> "LogRecord":
        """Return a copy with the payloads of the named fields replaced.

        Values may be raw payloads or :class:`FieldValue` instances; the
        field class never changes.
        """
        if not updates:
            return self
        out = []
        for n, fv in self.fields:
            if n in updates:
                new = updates[n]
                if not isinstance(new, FieldValue):
                    new = FieldValue(fv.cls, new)
                elif new.cls is not fv.cls:
                    raise ValueError(f"cannot change class of field {n!r}")
                out.append((n, new))
            else:
                out.append((n, fv))
        unknown = set(updates) - set(self.names)
        if unknown:
            raise KeyError(f"no such fields: {sorted(unknown)}")
        return LogRecord(self.schema_id, tuple(out), self.template)


@dataclass(frozen=True)
class LogStream:
    schema_id: str
    records: tuple[LogRecord, ...]
    source: str = ""
    interval: Optional[tuple[int, int]] = None
    # Set by the policy engine on anonymized output.
    profile_digest: Optional[str] = None
    scope: Optional[str] = None

    def __post_init__(self) -> None:
        for r in self.records:
            if r.schema_id != self.schema_id:
                raise ValueError(
                    f"record schema {r.schema_id!r} does not match stream schema {self.schema_id!r}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)

    def with_records(self, records: Iterable[LogRecord], **meta) -> "LogStream":
        kw = dict(
            source=self.source,
            interval=self.interval,
            profile_digest=self.profile_digest,
            scope=self.scope,
        )
        kw.update(meta)
        return LogStream(self.schema_id, tuple(records), **kw)


class UnknownSchema(KeyError):
    pass


class UnknownField(KeyError):
    pass


class SchemaMismatch(ValueError):
    pass


# Static class assignments per schema. Parsers may emit a subset (optional
# fields) but never a field missing from this table.
SCHEMA_FIELDS: dict[str, dict[str, FieldClass]] = {
    "netflow": {
        "start": FieldClass.TIMESTAMP,
        "end": FieldClass.TIMESTAMP,
        "srcaddr": FieldClass.IPV4_SRC,
        "dstaddr": FieldClass.IPV4_DST,
        "srcport": FieldClass.PORT_SRC,
        "dstport": FieldClass.PORT_DST,
        "proto": FieldClass.PROTOCOL,
        "packets": FieldClass.COUNT,
        "bytes": FieldClass.COUNT,
    },
    "syslog": {
        "timestamp": FieldClass.TIMESTAMP,
        "hostname": FieldClass.HOSTNAME,
        "msg": FieldClass.FREE_TEXT,
    },
    "clf": {
        "remote_addr": FieldClass.IPV4_SRC,
        "remote_host": FieldClass.HOSTNAME,
        "ident": FieldClass.USER_ID,
        "authuser": FieldClass.USER_ID,
        "time": FieldClass.TIMESTAMP,
        "request": FieldClass.FREE_TEXT,
        "status": FieldClass.STATUS_CODE,
        "bytes": FieldClass.COUNT,
    },
    "iptables": {
        "timestamp": FieldClass.TIMESTAMP,
        "hostname": FieldClass.HOSTNAME,
        "src": FieldClass.IPV4_SRC,
        "dst": FieldClass.IPV4_DST,
        "spt": FieldClass.PORT_SRC,
        "dpt": FieldClass.PORT_DST,
        "proto": FieldClass.PROTOCOL,
        "mac": FieldClass.OPAQUE,
    },
}

# Repeated iptables keys (quoted ICMP error headers) get ".N" suffixes.
_REPEAT_CLASS = {
    ("iptables", "src"): FieldClass.IPV4_OTHER,
    ("iptables", "dst"): FieldClass.IPV4_OTHER,
}

# Pseudonym namespaces default to the class name; these fields carry a
# distinct role even though they share a class.
FIELD_ROLES: dict[tuple[str, str], str] = {
    ("clf", "ident"): "ident",
    ("clf", "authuser"): "authuser",
}


def classify_field(schema_id: str, name: str) -> FieldClass:
    try:
        table = SCHEMA_FIELDS[schema_id]
    except KeyError:
        raise UnknownSchema(schema_id) from None
    if name in table:
        return table[name]
    base, dot, suffix = name.partition(".")
    if dot and suffix.isdigit() and base in table:
        return _REPEAT_CLASS.get((schema_id, base), table[base])
    raise UnknownField(f"{schema_id}.{name}")


def field_role(schema_id: str, name: str) -> str:
    base = name.partition(".")[0]
    role = FIELD_ROLES.get((schema_id, base))
    return role if role is not None else classify_field(schema_id, name).value


def record_equal_modulo(
    a: LogRecord, b: LogRecord, ignored: Iterable[FieldClass] = ()
) -> bool:
    if a.schema_id != b.schema_id:
        raise SchemaMismatch(f"{a.schema_id} != {b.schema_id}")
    ignored = frozenset(ignored)
    kept_a = [(n, fv) for n, fv in a.fields if fv.cls not in ignored]
    kept_b = [(n, fv) for n, fv in b.fields if fv.cls not in ignored]
    return kept_a == kept_b


# -- address helpers ------------------------------------------------------

def parse_ipv4(text: str) -> int:
    """Dotted-quad to int. Raises ValueError on anything else."""
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError("bad address")
    n = 0
    for p in parts:
        if not p or len(p) > 3 or not p.isdigit() or not p.isascii():
            raise ValueError("bad address")
        o = int(p)
        if o > 255:
            raise ValueError("bad address")
        n = (n << 8) | o
    return n


def format_ipv4(n: int) -> str:
    return f"{n >> 24 & 255}.{n >> 16 & 255}.{n >> 8 & 255}.{n & 255}"


def lcp32(x: int, y: int) -> int:
    """Length of the longest common prefix of two 32-bit addresses."""
    return 32 - (x ^ y).bit_length()
