"""Anonymization profiles and their application to record streams.

A profile assigns each field class an ordinal on that class's ladder of
primitives, ordered by how much information survives. Keys are referenced
by id; with ``scope per-stream`` every key is salted with the stream's
source label, so the same value gets unrelated pseudonyms in different
logs.

Profile documents are line oriented::

    profile students
    scope cross-log
    key main main.key
    field ipv4 level 1
    field timestamp level 2
    field user-id level 1 key=main

Classes that no ``field`` line mentions get the top (black-marker) level of
their ladder; nothing passes through unprotected by omission.
"""

from __future__ import annotations

import hashlib
import os
import xml.etree.ElementTree as ET
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .keys import read_key
from .parsers import Rejected, parse_line, render_value, serialize
from .primitives import (
    ABSENT,
    DEFAULT_PORT_BOUNDARY,
    PRF_PLUGINS,
    UNITS_US,
    AnonKey,
    address_permute,
    keyed_pseudonym,
    port_bilateral,
    port_permute,
    pp_anonymize,
    truncate,
    ts_enumerate,
    ts_reduce_precision,
    ts_shift,
)
from .record import FieldClass, FieldValue, LogRecord, LogStream, field_role

LADDERS: dict[str, tuple[str, ...]] = {
    "ipv4": ("none", "prefix-preserving", "permute", "truncate", "black-marker"),
    "port": ("none", "bilateral", "permute", "black-marker"),
    "timestamp": ("none", "reduce-precision", "shift", "enumerate", "black-marker"),
    "text": ("none", "pseudonym", "black-marker"),
    "scalar": ("none", "black-marker"),
}

CLASS_LADDER: dict[FieldClass, str] = {
    FieldClass.IPV4_SRC: "ipv4",
    FieldClass.IPV4_DST: "ipv4",
    FieldClass.IPV4_OTHER: "ipv4",
    FieldClass.PORT_SRC: "port",
    FieldClass.PORT_DST: "port",
    FieldClass.TIMESTAMP: "timestamp",
    FieldClass.HOSTNAME: "text",
    FieldClass.USER_ID: "text",
    FieldClass.FREE_TEXT: "text",
    FieldClass.COUNT: "scalar",
    FieldClass.STATUS_CODE: "scalar",
    FieldClass.PROTOCOL: "scalar",
    FieldClass.OPAQUE: "scalar",
}

GROUPS: dict[str, tuple[FieldClass, ...]] = {
    "ipv4": (FieldClass.IPV4_SRC, FieldClass.IPV4_DST, FieldClass.IPV4_OTHER),
    "port": (FieldClass.PORT_SRC, FieldClass.PORT_DST),
}

KEYED = {("ipv4", 1), ("ipv4", 2), ("port", 1), ("port", 2), ("timestamp", 2), ("text", 1)}

ENUMERATE_LEVEL = 3
SCOPES = ("per-stream", "cross-log")


def _int_in(lo, hi):
    def check(v):
        n = int(v)
        if not lo <= n <= hi:
            raise ValueError
        return n
    return check


def _one_of(options):
    def check(v):
        if v not in options:
            raise ValueError
        return v
    return check


# (ladder, level or None for any level) -> {param: validator}
PARAMS = {
    ("ipv4", 1): {"prf": _one_of(PRF_PLUGINS)},
    ("ipv4", 3): {"bits": _int_in(0, 32)},
    ("port", 1): {"boundary": _int_in(1, 65535)},
    ("timestamp", 1): {"unit": _one_of(UNITS_US)},
    ("timestamp", None): {"year": _int_in(1970, 9999)},
    ("text", 1): {"ns": _one_of(("role", "class"))},
}

DEFAULTS = {"prf": "aes", "bits": 16, "boundary": DEFAULT_PORT_BOUNDARY,
            "unit": "second", "ns": "role"}


class ProfileError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.message = message
        self.lineno = lineno


class MissingKeyError(KeyError):
    pass


class OrderedStageError(RuntimeError):
    """Enumeration requested where the original order cannot be kept."""


class ScopeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    level: int
    key_id: Optional[str] = None
    params: tuple[tuple[str, object], ...] = ()

    def param(self, name: str):
        for k, v in self.params:
            if k == name:
                return v
        return DEFAULTS.get(name)


@dataclass(frozen=True)
class Profile:
    name: str
    scope: str
    assignments: Mapping[FieldClass, Assignment]
    keys: Mapping[str, str] = field(default_factory=dict)
    description: str = ""
    overrides: tuple[str, ...] = ()

    def assignment(self, cls: FieldClass) -> Assignment:
        return self.assignments[cls]

    def level(self, cls: FieldClass) -> int:
        return self.assignments[cls].level

    def key_id_for(self, cls: FieldClass) -> Optional[str]:
        a = self.assignments[cls]
        if (CLASS_LADDER[cls], a.level) not in KEYED:
            return None
        if a.key_id is not None:
            return a.key_id
        return next(iter(self.keys), None)

    def used_key_ids(self) -> list[str]:
        ids = []
        for cls in FieldClass:
            kid = self.key_id_for(cls)
            if kid is not None and kid not in ids:
                ids.append(kid)
        return ids

    @property
    def year(self) -> Optional[int]:
        y = self.assignments[FieldClass.TIMESTAMP].param("year")
        return y

    @property
    def uses_enumerate(self) -> bool:
        return self.level(FieldClass.TIMESTAMP) == ENUMERATE_LEVEL

    def normalized(self) -> str:
        lines = [f"profile {self.name}"]
        if self.description:
            lines.append(f"description {self.description}")
        lines.append(f"scope {self.scope}")
        for kid, path in self.keys.items():
            lines.append(f"key {kid} {path}")
        for cls in FieldClass:
            a = self.assignments[cls]
            parts = [f"field {cls.value} level {a.level}"]
            kid = self.key_id_for(cls)
            if kid is not None:
                parts.append(f"key={kid}")
            parts.extend(f"{k}={v}" for k, v in a.params)
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:16]

    def with_level(self, classes: Iterable[FieldClass], level: int,
                   key_id: str = "main") -> "Profile":
        """Copy with ``classes`` moved to ``level``.

        Parameters survive only when the level is unchanged; otherwise the
        new level runs with its defaults. A profile without keys that moves
        onto a keyed level gets ``key_id`` declared as ``<key_id>.key``.
        """
        classes = tuple(classes)
        keys = dict(self.keys)
        if not keys and any((CLASS_LADDER[c], level) in KEYED for c in classes):
            keys[key_id] = f"{key_id}.key"
        new = dict(self.assignments)
        for cls in classes:
            ladder = CLASS_LADDER[cls]
            if not 0 <= level < len(LADDERS[ladder]):
                raise ProfileError(f"invalid level {level} for {cls.value}")
            old = new[cls]
            if old.level == level:
                continue
            keep = tuple((k, v) for k, v in old.params if k == "year")
            new[cls] = Assignment(level, old.key_id, keep)
        return replace(self, assignments=new, keys=keys)


def _parse_field_line(tokens, lineno, declared_keys):
    if len(tokens) < 4 or tokens[2] != "level":
        raise ProfileError("expected: field <class> level <n> [key=<id>] [param=<value>]...", lineno)
    subject = tokens[1]
    if subject in GROUPS:
        classes = GROUPS[subject]
    else:
        try:
            classes = (FieldClass(subject),)
        except ValueError:
            raise ProfileError(f"unknown field class {subject}", lineno) from None
    ladder = CLASS_LADDER[classes[0]]
    try:
        level = int(tokens[3])
    except ValueError:
        raise ProfileError(f"invalid level {tokens[3]} for {subject}", lineno) from None
    if not 0 <= level < len(LADDERS[ladder]):
        raise ProfileError(f"invalid level {level} for {subject}", lineno)
    key_id = None
    params = []
    allowed = dict(PARAMS.get((ladder, None), {}))
    allowed.update(PARAMS.get((ladder, level), {}))
    for tok in tokens[4:]:
        name, eq, value = tok.partition("=")
        if not eq:
            raise ProfileError(f"expected name=value, got {tok}", lineno)
        if name == "key":
            if value not in declared_keys:
                raise ProfileError(f"unresolved key {value}", lineno)
            key_id = value
            continue
        if name not in allowed:
            raise ProfileError(f"parameter {name} not valid for {subject} level {level}", lineno)
        try:
            params.append((name, allowed[name](value)))
        except ValueError:
            raise ProfileError(f"invalid value {value} for {name}", lineno) from None
    if (ladder, level) in KEYED and key_id is None and not declared_keys:
        raise ProfileError(f"{subject} level {level} needs a key but none is declared", lineno)
    return classes, Assignment(level, key_id, tuple(sorted(params)))


def load_profile(source: str) -> Profile:
    """Parse and validate a profile document."""
    name = None
    scope = "cross-log"
    description = ""
    keys: dict[str, str] = {}
    assigned: dict[FieldClass, Assignment] = {}
    where: dict[FieldClass, int] = {}
    overrides = []
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "profile":
            if len(tokens) != 2:
                raise ProfileError("expected: profile <name>", lineno)
            if name is not None:
                raise ProfileError("duplicate profile line", lineno)
            name = tokens[1]
        elif head == "description":
            description = line[len("description"):].strip()
        elif head == "scope":
            if len(tokens) != 2 or tokens[1] not in SCOPES:
                raise ProfileError("expected: scope per-stream|cross-log", lineno)
            scope = tokens[1]
        elif head == "key":
            if len(tokens) != 3:
                raise ProfileError("expected: key <key-id> <path>", lineno)
            if tokens[1] in keys:
                raise ProfileError(f"duplicate key {tokens[1]}", lineno)
            keys[tokens[1]] = tokens[2]
        elif head == "field":
            classes, a = _parse_field_line(tokens, lineno, keys)
            for cls in classes:
                if cls in where:
                    raise ProfileError(f"{cls.value} already assigned on line {where[cls]}", lineno)
                assigned[cls] = a
                where[cls] = lineno
            overrides.append(tokens[1])
        else:
            raise ProfileError(f"unknown directive {head}", lineno)
    if name is None:
        raise ProfileError("missing profile line")
    for cls in FieldClass:
        if cls not in assigned:
            assigned[cls] = Assignment(len(LADDERS[CLASS_LADDER[cls]]) - 1)
            if (CLASS_LADDER[cls], assigned[cls].level) in KEYED and not keys:
                raise ProfileError(f"{cls.value} defaults to a keyed level but no key is declared")
    return Profile(name, scope, assigned, keys, description, tuple(overrides))


def load_profile_file(path) -> Profile:
    return load_profile(Path(path).read_text(encoding="utf-8"))


BUILTIN_PROFILES = ("public", "research-partner", "students", "internal")


def builtin_profile_text(name: str) -> str:
    if name not in BUILTIN_PROFILES:
        raise KeyError(name)
    return resources.files("anonlog").joinpath("profiles", f"{name}.profile").read_text()


def load_keys(profile: Profile, key_dir=None) -> dict[str, AnonKey]:
    """Read every key the profile's levels actually use."""
    out = {}
    for kid in profile.used_key_ids():
        path = Path(profile.keys[kid])
        if not path.is_absolute() and key_dir is not None:
            path = Path(key_dir) / path
        try:
            out[kid] = read_key(path, kid)
        except FileNotFoundError:
            raise MissingKeyError(f"key {kid}: {path} not found") from None
    return out


# -- record transformation --------------------------------------------------------

class Transformer:
    """Applies every stateless level of a profile to single records.

    Enumeration is left untouched here; it needs the whole stream.
    """

    def __init__(self, profile: Profile, keys: Mapping[str, AnonKey], stream_id: str = ""):
        self.profile = profile
        self.stream_id = stream_id
        self._keys: dict[FieldClass, AnonKey] = {}
        for cls in FieldClass:
            kid = profile.key_id_for(cls)
            if kid is None:
                continue
            if kid not in keys:
                raise MissingKeyError(f"key {kid} not loaded")
            k = keys[kid]
            if profile.scope == "per-stream":
                k = k.for_stream(stream_id)
            self._keys[cls] = k
        # Cross-log logs share one time offset so events stay comparable.
        self._shift_id = stream_id if profile.scope == "per-stream" else "profile:" + profile.name
        self._levels = {cls: profile.assignment(cls) for cls in FieldClass}

    def value(self, schema_id: str, name: str, fv: FieldValue):
        """Transformed payload of one field, or ``None`` if unchanged."""
        a = self._levels[fv.cls]
        lvl = a.level
        if lvl == 0:
            return None
        ladder = CLASS_LADDER[fv.cls]
        v = fv.value
        if ladder == "ipv4":
            if lvl == 1:
                return pp_anonymize(v, self._keys[fv.cls], a.param("prf"))
            if lvl == 2:
                return address_permute(v, self._keys[fv.cls])
            if lvl == 3:
                return truncate(v, a.param("bits"))
            return 0
        if ladder == "port":
            if lvl == 1:
                return port_bilateral(v, self._keys[fv.cls], a.param("boundary"))
            if lvl == 2:
                return port_permute(v, self._keys[fv.cls])
            return 0
        if ladder == "timestamp":
            if lvl == 1:
                return ts_reduce_precision(v, a.param("unit"))
            if lvl == 2:
                return ts_shift(v, self._keys[fv.cls], self._shift_id)
            if lvl == ENUMERATE_LEVEL:
                return None
            return 0
        if ladder == "text":
            if lvl == 1:
                if v in (ABSENT, ""):
                    return None
                ns = field_role(schema_id, name) if a.param("ns") == "role" else fv.cls.value
                return keyed_pseudonym(v, self._keys[fv.cls], ns)
            return ABSENT
        # scalar ladder: level 1 is the black marker
        return ABSENT if isinstance(v, str) else 0

    def record(self, rec: LogRecord) -> tuple[LogRecord, int]:
        updates = {}
        saturated = 0
        for name, fv in rec.fields:
            new = self.value(rec.schema_id, name, fv)
            if new is None:
                continue
            if isinstance(new, tuple):
                new, sat = new
                saturated += sat
            if new != fv.value:
                updates[name] = new
        return rec.replace(updates), saturated

    def records(self, recs: Sequence[LogRecord]) -> tuple[list[LogRecord], int]:
        out = []
        sat = 0
        for r in recs:
            nr, s = self.record(r)
            out.append(nr)
            sat += s
        return out, sat


@dataclass
class AppliedProfileReport:
    records_in: int
    records_out: int
    rejected: int
    transformed: dict[str, int]
    profile_digest: str
    saturated: int = 0
    sequential_stage: bool = False

    def summary(self) -> str:
        lines = [
            f"profile {self.profile_digest}",
            f"records processed {self.records_out}",
            f"records rejected {self.rejected}",
        ]
        for cls, n in sorted(self.transformed.items()):
            lines.append(f"transformed {cls} {n}")
        if self.saturated:
            lines.append(f"timestamps saturated at epoch {self.saturated}")
        if self.sequential_stage:
            lines.append("sequential stage: enumerate")
        return "\n".join(lines)


_WORKER: Optional[Transformer] = None


def _worker_init(profile, keys, stream_id):
    global _WORKER
    _WORKER = Transformer(profile, keys, stream_id)


def _worker_run(chunk):
    return _WORKER.records(chunk)


def _chunks(seq, n):
    size = max(1, -(-len(seq) // (n * 4)))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def transform_records(
    records: Sequence[LogRecord],
    profile: Profile,
    keys: Mapping[str, AnonKey],
    stream_id: str = "",
    workers: Optional[int] = None,
) -> tuple[list[LogRecord], int]:
    """Stateless part of :func:`apply_profile`, optionally on worker processes."""
    if not workers or workers <= 1 or len(records) < 2:
        return Transformer(profile, keys, stream_id).records(records)
    Transformer(profile, keys, stream_id)  # fail fast on missing keys
    out: list[LogRecord] = []
    sat = 0
    with ProcessPoolExecutor(workers, initializer=_worker_init,
                             initargs=(profile, dict(keys), stream_id)) as pool:
        for recs, s in pool.map(_worker_run, _chunks(list(records), workers)):
            out.extend(recs)
            sat += s
    return out, sat


class LineWorkerPool:
    """Worker processes that parse, transform and serialize raw lines.

    Only text crosses the process boundary. Output for each line is its
    serialized record or the :class:`Rejected` outcome, in input order, so
    results equal a sequential run byte for byte.
    """

    def __init__(self, workers: int, schema_id: str, year: int, profile: Profile,
                 keys: Mapping[str, AnonKey], stream_id: str):
        Transformer(profile, keys, stream_id)  # fail fast on missing keys
        self.workers = workers
        self._pool = ProcessPoolExecutor(
            workers, initializer=_line_worker_init,
            initargs=(schema_id, year, profile, dict(keys), stream_id))

    def run(self, lines: Sequence[str]) -> tuple[list, int, Counter]:
        outputs: list = []
        sat = 0
        counts: Counter = Counter()
        for out, s, c in self._pool.map(_line_worker_run, _chunks(list(lines), self.workers)):
            outputs.extend(out)
            sat += s
            counts.update(c)
        return outputs, sat, counts

    def close(self) -> None:
        self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_LINE_WORKER: Optional[tuple] = None


def _line_worker_init(schema_id, year, profile, keys, stream_id):
    global _LINE_WORKER
    _LINE_WORKER = (schema_id, year, profile, Transformer(profile, keys, stream_id))


def _line_worker_run(lines):
    schema_id, year, profile, t = _LINE_WORKER
    out = []
    sat = 0
    counts: Counter = Counter()
    for line in lines:
        rec = parse_line(schema_id, line, year)
        if isinstance(rec, Rejected):
            out.append(rec)
            continue
        new, s = t.record(rec)
        sat += s
        counts.update(count_transformed((rec,), profile))
        out.append(serialize(new))
    return out, sat, counts


def count_transformed(records: Iterable[LogRecord], profile: Profile) -> dict[str, int]:
    c: Counter = Counter()
    for r in records:
        for _, fv in r.fields:
            if profile.level(fv.cls) > 0:
                c[fv.cls.value] += 1
    return dict(c)


def apply_profile(
    stream: LogStream,
    profile: Profile,
    keys: Mapping[str, AnonKey],
    workers: Optional[int] = None,
    rejected: int = 0,
) -> tuple[LogStream, AppliedProfileReport]:
    """Anonymize a stream; record count and order are preserved."""
    out, sat = transform_records(stream.records, profile, keys, stream.source, workers)
    result = stream.with_records(out, profile_digest=profile.digest, scope=profile.scope)
    if profile.uses_enumerate:
        result = ts_enumerate(result)
    report = AppliedProfileReport(
        records_in=len(stream) + rejected,
        records_out=len(result),
        rejected=rejected,
        transformed=count_transformed(stream.records, profile),
        profile_digest=profile.digest,
        saturated=sat,
        sequential_stage=profile.uses_enumerate,
    )
    return result, report


def apply_profile_merged(
    streams: Sequence[LogStream],
    order: Sequence[tuple[int, int]],
    profile: Profile,
    keys: Mapping[str, AnonKey],
    workers: Optional[int] = None,
) -> list[LogRecord]:
    """Anonymize several streams and re-interleave them.

    ``order`` lists ``(stream index, record index)`` pairs in the original
    merged order. Enumeration over interleaved output is refused.
    """
    if profile.uses_enumerate:
        raise OrderedStageError("enumerate cannot run on interleaved multi-stream input")
    done = [apply_profile(s, profile, keys, workers)[0] for s in streams]
    if sorted(order) != [(i, j) for i, s in enumerate(streams) for j in range(len(s))]:
        raise ValueError("order must name every record of every stream exactly once")
    return [done[i].records[j] for i, j in order]


# -- consistency ----------------------------------------------------------------

def _pseudonymizing(profile: Profile, cls: FieldClass) -> bool:
    return (CLASS_LADDER[cls], profile.level(cls)) in KEYED and CLASS_LADDER[cls] != "timestamp"


def check_consistency(
    pairs: Sequence[tuple[LogStream, LogStream]],
    profile: Profile,
) -> bool:
    """Check pseudonym consistency over (raw, anonymized) stream pairs.

    Within every stream a raw value must always get the same pseudonym.
    Across streams, cross-log scope requires equal pseudonyms for shared raw
    values and per-stream scope requires different ones. Values a primitive
    leaves fixed in every stream (well-known ports, absent markers) are not
    compared.
    """
    for _, anon in pairs:
        if anon.scope != profile.scope or anon.profile_digest != profile.digest:
            raise ScopeMismatch(
                f"stream {anon.source!r} was anonymized with scope {anon.scope}, "
                f"profile expects {profile.scope}"
            )
    maps: list[dict[tuple, object]] = []
    for raw, anon in pairs:
        if len(raw) != len(anon):
            return False
        m: dict[tuple, object] = {}
        for r, a in zip(raw.records, anon.records):
            for name, fv in r.fields:
                if not _pseudonymizing(profile, fv.cls):
                    continue
                ns = field_role(r.schema_id, name)
                k = (fv.cls, ns, fv.value)
                out = a[name].value
                if m.setdefault(k, out) != out:
                    return False
        maps.append(m)
    for i in range(len(maps)):
        for j in range(i + 1, len(maps)):
            for k in maps[i].keys() & maps[j].keys():
                x, y = maps[i][k], maps[j][k]
                raw_value = k[2]
                if profile.scope == "cross-log":
                    if x != y:
                        return False
                elif x == y and not (x == raw_value and y == raw_value):
                    return False
    return True


# -- structured output --------------------------------------------------------------

def stream_to_xml(stream: LogStream, profile: Profile) -> ET.Element:
    root = ET.Element("log", schema=stream.schema_id)
    if stream.source:
        root.set("source", stream.source)
    root.set("profile", profile.digest)
    for n, rec in enumerate(stream.records, 1):
        el = ET.SubElement(root, "record", n=str(n))
        for slot, (name, fv) in zip(rec.template.slots, rec.fields):
            f = ET.SubElement(el, "field", name=name, **{"class": fv.cls.value},
                              level=str(profile.level(fv.cls)))
            f.text = slot.text if fv == slot.value else render_value(rec.schema_id, fv, slot.style)
    return root


def to_xml(streams: Sequence[LogStream], profile: Profile) -> str:
    if len(streams) == 1:
        root = stream_to_xml(streams[0], profile)
    else:
        root = ET.Element("logs")
        root.extend(stream_to_xml(s, profile) for s in streams)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"
