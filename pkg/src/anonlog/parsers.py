"""Line parsers and the serializer for the four supported log formats.

Every parser returns either a :class:`~anonlog.record.LogRecord` or a
:class:`Rejected`. Field spans are recorded in the record's template, so
``serialize(parse(line)) == line`` for every accepted line and changed
fields are re-rendered in place.
"""

from __future__ import annotations

import calendar
import re
from datetime import datetime, timezone
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

from .record import (
    ABSENT,
    FieldClass,
    FieldValue,
    LogRecord,
    LogStream,
    Slot,
    Tag,
    Template,
    UnknownSchema,
    classify_field,
    format_ipv4,
    parse_ipv4,
)

DEFAULT_SYSLOG_YEAR = 2000

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
          "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_MONTH_NUM = {m: i + 1 for i, m in enumerate(MONTHS)}
_USEC = 1_000_000


@dataclass(frozen=True)
class Rejected:
    line: str
    reason: str


ParseOutcome = Union[LogRecord, Rejected]


class ParseError(ValueError):
    """Raised in strict mode on the first rejected line."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class SerializeError(ValueError):
    pass


class _Reject(Exception):
    pass


def _build(schema_id: str, line: str, spans: Sequence[tuple]) -> LogRecord:
    """spans: (name, start, end, payload, style) in line order."""
    literals = []
    slots = []
    fields = []
    pos = 0
    for name, start, end, payload, style in spans:
        literals.append(line[pos:start])
        fv = FieldValue(classify_field(schema_id, name), payload)
        slots.append(Slot(name, line[start:end], fv, style))
        fields.append((name, fv))
        pos = end
    literals.append(line[pos:])
    return LogRecord(schema_id, tuple(fields), Template(tuple(literals), tuple(slots)))


# -- scalar field parsers -------------------------------------------------

def _port(text: str) -> int:
    if not text.isdigit() or not text.isascii():
        raise _Reject("bad port")
    p = int(text)
    if p > 65535:
        raise _Reject("port out of range")
    return p


def _count(text: str, reason: str = "bad count") -> int:
    if not text.isdigit() or not text.isascii():
        raise _Reject(reason)
    n = int(text)
    if n >= 2**64:
        raise _Reject(reason)
    return n


def _address(text: str) -> int:
    try:
        return parse_ipv4(text)
    except ValueError:
        raise _Reject("bad address") from None


def _epoch_time(text: str) -> tuple[int, int]:
    """'1086100000.500000' -> (microseconds, number of fraction digits)."""
    sec, dot, frac = text.partition(".")
    if not sec.isdigit() or not sec.isascii() or (frac and not frac.isdigit()) or len(frac) > 6:
        raise _Reject("bad time")
    return int(sec) * _USEC + int(frac.ljust(6, "0") or 0), len(frac) if dot else -1


def _render_epoch(us: int, digits: int) -> str:
    sec, frac = divmod(us, _USEC)
    if digits < 0:
        return str(sec)
    if digits == 0:
        return f"{sec}."
    return f"{sec}.{frac:06d}"[: len(str(sec)) + 1 + digits]


def _civil_to_us(year, month, day, hh, mm, ss) -> int:
    if not (1 <= month <= 12 and 1 <= day <= calendar.monthrange(year, month)[1]
            and hh < 24 and mm < 60 and ss < 61):
        raise _Reject("bad timestamp")
    us = calendar.timegm((year, month, day, hh, mm, min(ss, 59), 0, 0, 0)) * _USEC
    if us < 0:
        raise _Reject("bad timestamp")
    return us


# -- netflow --------------------------------------------------------------

_NETFLOW_FIELDS = ("start", "end", "srcaddr", "dstaddr", "srcport", "dstport",
                   "proto", "packets", "bytes")
_NF_TOKEN = re.compile(r"[^\s,]+")
_NF_SEP = re.compile(r"\s*,\s*|\s+")


def parse_netflow(line: str) -> ParseOutcome:
    """Comma- or whitespace-separated flow export line.

    Columns: start, end, srcaddr, dstaddr, srcport, dstport, proto, packets,
    bytes. Times are epoch seconds with an optional fraction.
    """
    if not line.strip():
        return Rejected(line, "empty")
    tokens = list(_NF_TOKEN.finditer(line))
    if len(tokens) != len(_NETFLOW_FIELDS):
        return Rejected(line, "wrong column count")
    # Separators must be commas or whitespace only (no stray ",," columns).
    for a, b in zip(tokens, tokens[1:]):
        if not _NF_SEP.fullmatch(line[a.end():b.start()]):
            return Rejected(line, "wrong column count")
    try:
        spans = []
        for name, m in zip(_NETFLOW_FIELDS, tokens):
            text = m.group()
            style = None
            if name in ("start", "end"):
                payload, style = _epoch_time(text)
            elif name in ("srcaddr", "dstaddr"):
                payload = _address(text)
            elif name in ("srcport", "dstport"):
                payload = _port(text)
            elif name == "proto":
                payload = text
            else:
                payload = _count(text)
            spans.append((name, m.start(), m.end(), payload, style))
    except _Reject as e:
        return Rejected(line, str(e))
    return _build("netflow", line, spans)


# -- syslog header (shared with iptables) -----------------------------------

_SYSLOG_HEAD = re.compile(
    r"(?P<pri><\d{1,3}>)?"
    r"(?P<ts>(?P<mon>[A-Z][a-z]{2})(?P<sp> {1,2})(?P<day>\d{1,2}) "
    r"(?P<hh>\d{2}):(?P<mm>\d{2}):(?P<ss>\d{2}))"
)
_HOSTNAME = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")


def _syslog_header(line: str, year: int):
    """Return (spans, offset of message start or None)."""
    m = _SYSLOG_HEAD.match(line)
    if not m or m.group("mon") not in _MONTH_NUM:
        raise _Reject("missing timestamp")
    us = _civil_to_us(year, _MONTH_NUM[m.group("mon")], int(m.group("day")),
                      int(m.group("hh")), int(m.group("mm")), int(m.group("ss")))
    day = m.group("day")
    if len(day) == 2 and day[0] == "0":
        style = "pad0"
    elif len(m.group("sp")) == 2:
        style = "space"
    else:
        style = "plain"
    spans = [("timestamp", m.start("ts"), m.end("ts"), us, style)]
    pos = m.end()
    if line[pos:pos + 1] != " ":
        raise _Reject("missing hostname")
    h = _HOSTNAME.match(line, pos + 1)
    # A tag such as "sshd[211]:" in the hostname slot means the host is absent.
    if not h or (h.end() < len(line) and line[h.end()] != " "):
        raise _Reject("missing hostname")
    spans.append(("hostname", h.start(), h.end(), h.group(), None))
    msg_start = h.end() + 1 if h.end() < len(line) else None
    return spans, msg_start


def _render_syslog_time(us: int, style) -> str:
    t = datetime.fromtimestamp(us // _USEC, timezone.utc)
    mon = MONTHS[t.month - 1]
    if style == "pad0":
        day = f"{t.day:02d}"
    elif style == "space":
        day = f"{t.day:>2}"
    else:
        day = str(t.day)
    return f"{mon} {day} {t.hour:02d}:{t.minute:02d}:{t.second:02d}"


def parse_syslog(line: str, year: int = DEFAULT_SYSLOG_YEAR) -> ParseOutcome:
    """BSD syslog: ``[<pri>]Mmm dd hh:mm:ss host message``."""
    if not line.strip():
        return Rejected(line, "empty")
    try:
        spans, msg_start = _syslog_header(line, year)
    except _Reject as e:
        return Rejected(line, str(e))
    if msg_start is not None:
        spans.append(("msg", msg_start, len(line), line[msg_start:], None))
    return _build("syslog", line, spans)


# -- iptables -------------------------------------------------------------

_KV = re.compile(r"(?<![^\s\[])(SRC|DST|SPT|DPT|PROTO|MAC)=([^\s\]]+)")
_KV_NAME = {"SRC": "src", "DST": "dst", "SPT": "spt", "DPT": "dpt",
            "PROTO": "proto", "MAC": "mac"}


def parse_iptables(line: str, year: int = DEFAULT_SYSLOG_YEAR) -> ParseOutcome:
    """Syslog-carried netfilter line with KEY=VALUE tokens.

    SRC and DST are required. Repeated keys (quoted headers inside ICMP
    errors) become ``src.1``, ``dst.1`` and so on.
    """
    if not line.strip():
        return Rejected(line, "empty")
    try:
        spans, msg_start = _syslog_header(line, year)
        if msg_start is None:
            raise _Reject("missing SRC")
        seen: dict[str, int] = {}
        for m in _KV.finditer(line, msg_start):
            base = _KV_NAME[m.group(1)]
            k = seen.get(base, 0)
            seen[base] = k + 1
            name = base if k == 0 else f"{base}.{k}"
            text = m.group(2)
            if base in ("src", "dst"):
                payload = _address(text)
            elif base in ("spt", "dpt"):
                payload = _port(text)
            else:
                payload = text
            spans.append((name, m.start(2), m.end(2), payload, None))
        for need in ("src", "dst"):
            if need not in seen:
                raise _Reject(f"missing {need.upper()}")
    except _Reject as e:
        return Rejected(line, str(e))
    return _build("iptables", line, spans)


# -- common log format ----------------------------------------------------

_CLF = re.compile(
    r'(?P<host>\S+) (?P<ident>\S+) (?P<authuser>\S+) '
    r'\[(?P<time>[^\]]*)\] "(?P<request>(?:[^"\\]|\\.)*)" '
    r'(?P<status>\S+) (?P<bytes>\S+)'
)
_CLF_TIME = re.compile(
    r"(\d{2})/([A-Z][a-z]{2})/(\d{4}):(\d{2}):(\d{2}):(\d{2}) ([+-])(\d{2})(\d{2})"
)


def _clf_time(text: str) -> int:
    m = _CLF_TIME.fullmatch(text)
    if not m or m.group(2) not in _MONTH_NUM:
        raise _Reject("bad time")
    d, mon, y, hh, mm, ss, sign, oh, om = m.groups()
    us = _civil_to_us(int(y), _MONTH_NUM[mon], int(d), int(hh), int(mm), int(ss))
    offset = (int(oh) * 3600 + int(om) * 60) * _USEC
    us = us - offset if sign == "+" else us + offset
    if us < 0:
        raise _Reject("bad time")
    return us


def _render_clf_time(us: int, style) -> str:
    t = datetime.fromtimestamp(us // _USEC, timezone.utc)
    return (f"{t.day:02d}/{MONTHS[t.month - 1]}/{t.year:04d}:"
            f"{t.hour:02d}:{t.minute:02d}:{t.second:02d} +0000")


def parse_clf(line: str) -> ParseOutcome:
    """Apache common log format line."""
    if not line.strip():
        return Rejected(line, "empty")
    m = _CLF.fullmatch(line)
    if not m:
        return Rejected(line, "malformed")
    try:
        host = m.group("host")
        try:
            spans = [("remote_addr", m.start("host"), m.end("host"), parse_ipv4(host), None)]
        except ValueError:
            spans = [("remote_host", m.start("host"), m.end("host"), host, None)]
        spans.append(("ident", m.start("ident"), m.end("ident"), m.group("ident"), None))
        spans.append(("authuser", m.start("authuser"), m.end("authuser"), m.group("authuser"), None))
        spans.append(("time", m.start("time"), m.end("time"), _clf_time(m.group("time")), None))
        spans.append(("request", m.start("request"), m.end("request"), m.group("request"), None))
        spans.append(("status", m.start("status"), m.end("status"),
                      _count(m.group("status"), "bad status"), None))
        b = m.group("bytes")
        spans.append(("bytes", m.start("bytes"), m.end("bytes"),
                      0 if b == ABSENT else _count(b, "bad bytes"), None))
    except _Reject as e:
        return Rejected(line, str(e))
    return _build("clf", line, spans)


# -- registry -------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    schema_id: str
    parse: Callable[..., ParseOutcome]
    render_time: Callable[[int, object], str]
    takes_year: bool = False

    @property
    def fields(self):
        from .record import SCHEMA_FIELDS
        return SCHEMA_FIELDS[self.schema_id]


REGISTRY: dict[str, Schema] = {
    "netflow": Schema("netflow", parse_netflow, lambda us, st: _render_epoch(us, 6 if st is None else st)),
    "syslog": Schema("syslog", parse_syslog, _render_syslog_time, takes_year=True),
    "clf": Schema("clf", parse_clf, _render_clf_time),
    "iptables": Schema("iptables", parse_iptables, _render_syslog_time, takes_year=True),
}


def get_schema(schema_id: str) -> Schema:
    try:
        return REGISTRY[schema_id]
    except KeyError:
        raise UnknownSchema(schema_id) from None


def parse_line(schema_id: str, line: str, year: int = DEFAULT_SYSLOG_YEAR) -> ParseOutcome:
    schema = get_schema(schema_id)
    return schema.parse(line, year) if schema.takes_year else schema.parse(line)


def parse_lines(
    schema_id: str,
    lines: Iterable[str],
    strict: bool = False,
    source: str = "",
    year: int = DEFAULT_SYSLOG_YEAR,
) -> tuple[LogStream, list[tuple[int, str]]]:
    """Parse a sequence of lines (without newlines) into a stream.

    Lenient mode skips rejects and returns them as ``(lineno, reason)``;
    strict mode raises :class:`ParseError` on the first one.
    """
    schema = get_schema(schema_id)
    parse = (lambda s: schema.parse(s, year)) if schema.takes_year else schema.parse
    records = []
    rejects = []
    for i, line in enumerate(lines, 1):
        out = parse(line)
        if isinstance(out, Rejected):
            if strict:
                raise ParseError(i, out.reason)
            rejects.append((i, out.reason))
        else:
            records.append(out)
    return LogStream(schema_id, tuple(records), source=source), rejects


# -- serialization --------------------------------------------------------

def render_value(schema_id: str, fv: FieldValue, style=None) -> str:
    tag = fv.tag
    if tag is Tag.ADDRESS:
        return format_ipv4(fv.value)
    if tag is Tag.TIMESTAMP:
        return get_schema(schema_id).render_time(fv.value, style)
    if tag is Tag.TEXT:
        return fv.value
    return str(fv.value)


def serialize(record: LogRecord) -> str:
    """Re-emit a record in its native format.

    Unchanged fields are written with their original text, so an unmodified
    record reproduces its input line exactly.
    """
    tpl = record.template
    if len(tpl.slots) != len(record.fields):
        raise SerializeError("template/field-count mismatch")
    parts = [tpl.literals[0]]
    for slot, (name, fv), lit in zip(tpl.slots, record.fields, tpl.literals[1:]):
        if slot.name != name:
            raise SerializeError("template/field-count mismatch")
        if fv == slot.value:
            parts.append(slot.text)
        else:
            parts.append(render_value(record.schema_id, fv, slot.style))
        parts.append(lit)
    return "".join(parts)


def serialize_stream(stream: LogStream) -> Iterable[str]:
    for r in stream.records:
        yield serialize(r)
