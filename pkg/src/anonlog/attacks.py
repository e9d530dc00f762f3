"""De-anonymization attacks run against anonymized streams.

Each attack returns a :class:`ClaimList` of :class:`MappingClaim` objects
(anonymized value -> claimed raw value). :func:`evaluate` anonymizes a
fixture suite under a profile, runs the selected attacks and scores their
claims against the ground truth.
"""

from __future__ import annotations

import random
import xml.etree.ElementTree as ET
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .parsers import parse_netflow, render_value
from .policy import CLASS_LADDER, GROUPS, LADDERS, Profile, apply_profile
from .primitives import USEC, AnonKey
from .record import (
    ADDRESS_CLASSES,
    FieldClass,
    LogRecord,
    LogStream,
    Tag,
    field_role,
    format_ipv4,
    lcp32,
    parse_ipv4,
)
from .primitives import truncate

EVIDENCE = ("fingerprint", "structure", "propagation", "injection")

ATTACKS = (
    "fingerprint",
    "structure",
    "prefix",
    "propagation",
    "propagation-cross",
    "injection",
    "injection-timing",
)

# Field-class groups each attack reads its signal through.
ATTACK_CARRIERS: dict[str, tuple[str, ...]] = {
    "fingerprint": ("port", "ipv4"),
    "structure": ("ipv4", "timestamp"),
    "prefix": ("ipv4",),
    "propagation": ("user-id",),
    "propagation-cross": ("user-id",),
    "injection": ("port",),
    "injection-timing": ("timestamp",),
}

SCAN_MIN_TARGETS = 64
SCAN_WINDOW_S = 600
PORT_WRAP_BASE = 1024
PORT_WRAP_SPAN = 65536 - PORT_WRAP_BASE


@dataclass(frozen=True)
class MappingClaim:
    anonymized: str
    raw: str
    evidence: str
    confidence: float = 1.0
    bits: Optional[int] = None
    cls: Optional[FieldClass] = None
    role: Optional[str] = None
    where: Optional[str] = None

    def __post_init__(self):
        if self.evidence not in EVIDENCE:
            raise ValueError(f"unknown evidence kind {self.evidence!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.bits is not None and not 1 <= self.bits <= 32:
            raise ValueError("bits-recovered must lie in [1, 32]")

    @property
    def raw_address(self) -> int:
        return parse_ipv4(self.raw.partition("/")[0])


class ClaimList(list):
    """A list of claims with a diagnostic note.

    ``carrier_destroyed`` is set when the field the attack reads was
    annihilated, so an empty result is expected rather than a miss.
    """

    def __init__(self, claims=(), note: Optional[str] = None, carrier_destroyed: bool = False):
        super().__init__(claims)
        self.note = note
        self.carrier_destroyed = carrier_destroyed
        self.detections: list[dict] = []
        self.affected_records = 0


class NoKnownMapping(ValueError):
    pass


# -- flow record access ------------------------------------------------------------

def _first(rec: LogRecord, cls: FieldClass):
    for _, fv in rec.fields:
        if fv.cls is cls:
            return fv.value
    return None


@dataclass(frozen=True)
class _Flow:
    index: int
    ts: Optional[int]
    src: Optional[int]
    dst: Optional[int]
    dport: Optional[int]


def _flows(stream: LogStream) -> list[_Flow]:
    return [
        _Flow(i, _first(r, FieldClass.TIMESTAMP), _first(r, FieldClass.IPV4_SRC),
              _first(r, FieldClass.IPV4_DST), _first(r, FieldClass.PORT_DST))
        for i, r in enumerate(stream.records)
    ]


def _ports_destroyed(flows: Sequence[_Flow]) -> bool:
    ports = [f.dport for f in flows if f.dport is not None]
    return not ports or all(p == 0 for p in ports)


def _times_destroyed(flows: Sequence[_Flow]) -> bool:
    ts = {f.ts for f in flows if f.ts is not None}
    return len(ts) <= 1


def _by_source(flows: Sequence[_Flow]) -> dict[int, list[_Flow]]:
    out: dict[int, list[_Flow]] = defaultdict(list)
    for f in flows:
        if f.src is not None:
            out[f.src].append(f)
    for seq in out.values():
        seq.sort(key=lambda f: (f.ts if f.ts is not None else 0, f.index))
    return out


# -- fingerprinting -------------------------------------------------------------

def fingerprint_servers(
    flows: LogStream,
    known_servers: Sequence[str],
    service_port: int = 80,
    threshold: float = 0.95,
) -> ClaimList:
    """Claim anonymized addresses that take at least ``threshold`` of the
    flows to ``service_port``.

    ``known_servers`` are the raw identities the attacker knows serve that
    port, most popular first; candidates are paired with them by share.
    """
    fl = _flows(flows)
    if _ports_destroyed(fl):
        return ClaimList(note="carrier destroyed: destination ports annihilated",
                         carrier_destroyed=True)
    counts = Counter(f.dst for f in fl if f.dport == service_port and f.dst is not None)
    total = sum(counts.values())
    if not total:
        return ClaimList(note=f"no flows to port {service_port}")
    ranked = sorted(((n / total, addr) for addr, n in counts.items()), key=lambda t: (-t[0], t[1]))
    claims = ClaimList()
    for (share, addr), raw in zip((c for c in ranked if c[0] >= threshold), known_servers):
        claims.append(MappingClaim(format_ipv4(addr), raw, "fingerprint", share,
                                   bits=32, cls=FieldClass.IPV4_DST))
    return claims


# -- structure recognition ----------------------------------------------------------

def _scan_windows(seq: Sequence[_Flow], min_targets: int, window_us: int):
    """Yield lists of first contacts (ts, dst) forming candidate scans."""
    first: dict[int, tuple] = {}
    for f in seq:
        if f.dst is not None and f.dst not in first:
            first[f.dst] = (f.ts if f.ts is not None else 0, f.index, f.dst)
    contacts = sorted(first.values())
    i = 0
    n = len(contacts)
    j = 0
    while i < n:
        if j < i:
            j = i
        while j + 1 < n and contacts[j + 1][0] - contacts[i][0] <= window_us:
            j += 1
        if j - i + 1 >= min_targets:
            yield contacts[i:j + 1]
            i = j + 1
        else:
            i += 1


def recognize_scan_structure(
    trace: LogStream,
    known: Iterable[MappingClaim] = (),
    min_targets: int = SCAN_MIN_TARGETS,
    window_s: int = SCAN_WINDOW_S,
    require_prefix: bool = False,
) -> ClaimList:
    """Find sequential scans and, given an anchor, map every scanned address.

    A scan is one source touching at least ``min_targets`` distinct
    destinations within ``window_s``. If enough of them share an anonymized
    /24 the scan is reported as localized and restricted to that prefix.
    When timestamps strictly order the scan and a known full mapping falls
    inside it, raw addresses are assigned by scan position.
    """
    fl = _flows(trace)
    anchors = {parse_ipv4(c.anonymized): c.raw_address for c in known
               if c.bits in (None, 32)}
    times_gone = _times_destroyed(fl)
    claims = ClaimList()
    for src, seq in sorted(_by_source(fl).items()):
        for contacts in _scan_windows(seq, min_targets, window_s * USEC):
            by_prefix = Counter(truncate(c[2], 24) for c in contacts)
            prefix, n = by_prefix.most_common(1)[0]
            localized = n >= min_targets
            if localized:
                contacts = [c for c in contacts if truncate(c[2], 24) == prefix]
            elif require_prefix:
                continue
            det = {"source": format_ipv4(src), "targets": len(contacts),
                   "localized": localized, "aligned": False}
            claims.detections.append(det)
            ts = [c[0] for c in contacts]
            if times_gone or any(b <= a for a, b in zip(ts, ts[1:])):
                det["reason"] = "timestamps do not order the scan"
                continue
            order = [c[2] for c in contacts]
            anchor = next(((k, anchors[a]) for k, a in enumerate(order) if a in anchors), None)
            if anchor is None:
                det["reason"] = "no known mapping inside the scan"
                continue
            base = anchor[1] - anchor[0]
            if base < 0 or base + len(order) - 1 > 0xFFFFFFFF:
                det["reason"] = "anchor inconsistent with a sequential scan"
                continue
            det["aligned"] = True
            for k, a in enumerate(order):
                claims.append(MappingClaim(format_ipv4(a), format_ipv4(base + k), "structure",
                                           1.0, bits=32, cls=FieldClass.IPV4_DST))
    if not claims.detections:
        claims.note = "no scan detected"
    elif times_gone:
        claims.note = "timestamps destroyed: detection only"
    elif not claims:
        claims.note = "detection only"
    return claims


def propagate_prefix_bits(
    addresses: Iterable,
    known: Iterable[MappingClaim],
    cls: FieldClass = FieldClass.IPV4_DST,
) -> ClaimList:
    """Partial claims from prefix structure.

    For anonymized y' sharing k leading bits with a known pair (x, x'),
    y shares k bits with x and differs in bit k+1: min(k+1, 32) bits.
    The anchor with the longest shared prefix is used.
    """
    pairs = [(parse_ipv4(c.anonymized), c.raw_address) for c in known if c.bits in (None, 32)]
    if not pairs:
        raise NoKnownMapping("no known full address mapping")
    anchors = {a for a, _ in pairs}
    seen = set()
    claims = ClaimList()
    for y in addresses:
        y = parse_ipv4(y) if isinstance(y, str) else y
        if y in anchors or y in seen:
            continue
        seen.add(y)
        xa, xr = max(pairs, key=lambda p: (lcp32(p[0], y), -p[0]))
        k = lcp32(xa, y)
        m = min(k + 1, 32)
        guess = truncate(xr ^ (1 << (31 - k)), m) if k < 32 else xr
        claims.append(MappingClaim(format_ipv4(y), f"{format_ipv4(guess)}/{m}", "structure",
                                   1.0, bits=m, cls=cls))
    return claims


# -- known-mapping propagation ------------------------------------------------------

def propagate_known_mappings(logs: Sequence[LogStream], known: MappingClaim) -> ClaimList:
    """Every occurrence of a known anonymized value, in any field of any log.

    Claims carry the field role, so occurrences outside the known claim's
    role (a username pseudonym turning up as a password) are visible.
    """
    want_address = known.cls in ADDRESS_CLASSES if known.cls is not None else None
    claims = ClaimList()
    records = set()
    for s_idx, stream in enumerate(logs):
        label = stream.source or str(s_idx)
        for r_idx, rec in enumerate(stream.records):
            for name, fv in rec.fields:
                tag = fv.tag
                if tag not in (Tag.ADDRESS, Tag.TEXT, Tag.PORT):
                    continue
                if want_address is not None and (tag is Tag.ADDRESS) != want_address:
                    continue
                if render_value(rec.schema_id, fv) != known.anonymized:
                    continue
                claims.append(MappingClaim(
                    known.anonymized, known.raw, "propagation", known.confidence,
                    bits=known.bits, cls=fv.cls, role=field_role(rec.schema_id, name),
                    where=f"{label}:{r_idx}:{name}"))
                records.add((s_idx, r_idx))
    claims.affected_records = len(records)
    return claims


# -- data injection --------------------------------------------------------------

@dataclass(frozen=True)
class InjectionPattern:
    generator: str = "fibonacci"          # fibonacci | seeded-prng
    carrier: str = "dst-port"             # dst-port | inter-arrival
    length: int = 15
    seed: object = None
    base_gap_s: float = 10.0
    jitter: float = 0.1
    port: int = 443                        # fixed dst port for timing probes

    def __post_init__(self):
        if self.generator not in ("fibonacci", "seeded-prng"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.carrier not in ("dst-port", "inter-arrival"):
            raise ValueError(f"unknown carrier {self.carrier!r}")
        if self.length < 8:
            raise ValueError("pattern length must be at least 8")
        if self.generator == "seeded-prng" and self.seed is None:
            raise ValueError("seeded-prng needs a seed")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter tolerance must lie in [0, 1)")

    def sequence(self) -> list[int]:
        """Carrier values: ports, or gap multiples of ``base_gap_s``."""
        n = self.length
        if self.generator == "fibonacci":
            # Ports use distinct terms 1,2,3,5...; gaps use 1,1,2,3,5...
            a, b = (1, 2) if self.carrier == "dst-port" else (1, 1)
            seq = []
            for _ in range(n):
                seq.append(a)
                a, b = b, a + b
        else:
            rng = random.Random(f"{self.seed}")
            hi = 65535 if self.carrier == "dst-port" else 20
            seq = [rng.randint(1, hi) for _ in range(n)]
        if self.carrier == "dst-port":
            seq = [wrap_port(v) for v in seq]
        return seq


def wrap_port(v: int) -> int:
    """Values beyond the port space wrap into [1024, 65535]."""
    if v <= 65535:
        return v
    return PORT_WRAP_BASE + (v - PORT_WRAP_BASE) % PORT_WRAP_SPAN


def inject_generate(
    pattern: InjectionPattern,
    target: str,
    count: int = 1,
    source: str = "198.51.100.7",
    start: float = 1086048000.0,
) -> LogStream:
    """Synthetic flow records carrying the pattern, as a netflow stream.

    ``count`` repeats the whole pattern; repetitions are an hour apart.
    """
    seq = pattern.sequence()
    parse_ipv4(target)
    parse_ipv4(source)
    records = []
    t0 = int(round(start * USEC))
    gap = int(round(pattern.base_gap_s * USEC))
    sport = 40000
    for rep in range(count):
        t = t0 + rep * 3600 * USEC
        if pattern.carrier == "dst-port":
            times = [t + i * gap for i in range(len(seq))]
            ports = seq
        else:
            times = [t]
            for m in seq:
                times.append(times[-1] + m * gap)
            ports = [pattern.port] * len(times)
        for ts, dport in zip(times, ports):
            line = flow_line(ts, ts + 50_000, source, target, sport, dport, "TCP", 1, 60)
            sport += 1
            records.append(parse_netflow(line))
    return LogStream("netflow", tuple(records), source=f"inject:{target}")


def flow_line(start_us, end_us, src, dst, sport, dport, proto, packets, nbytes, sep=",") -> str:
    s = f"{start_us // USEC}.{start_us % USEC:06d}"
    e = f"{end_us // USEC}.{end_us % USEC:06d}"
    return sep.join((s, e, src, dst, str(sport), str(dport), proto, str(packets), str(nbytes)))


def inject_detect(
    trace: LogStream,
    pattern: InjectionPattern,
    target: str,
    min_match: Optional[int] = None,
) -> ClaimList:
    """Find the pattern in per-source flow sequences; claim the destination.

    Port carriers must match exactly; timing carriers allow each gap a
    relative error up to ``pattern.jitter``. A match of ``m`` carrier
    values has confidence ``m / length``.
    """
    seq = pattern.sequence()
    L = len(seq)
    need = L if min_match is None else min_match
    fl = _flows(trace)
    if pattern.carrier == "dst-port" and _ports_destroyed(fl):
        return ClaimList(note="carrier destroyed: destination ports annihilated",
                         carrier_destroyed=True)
    if pattern.carrier == "inter-arrival" and _times_destroyed(fl):
        return ClaimList(note="carrier destroyed: timestamps annihilated",
                         carrier_destroyed=True)
    gap = pattern.base_gap_s * USEC
    best: dict[int, int] = {}
    for src, flows in _by_source(fl).items():
        if pattern.carrier == "dst-port":
            values = [f.dport for f in flows]

            def ok(i, k):
                return values[i] == seq[k]
            n = len(values)
        else:
            ts = [f.ts for f in flows]
            values = [b - a for a, b in zip(ts, ts[1:])]

            def ok(i, k):
                want = seq[k] * gap
                return abs(values[i] - want) <= pattern.jitter * want
            n = len(values)
        for i in range(n):
            for k in range(L):
                if not ok(i, k):
                    continue
                m = 1
                while i + m < n and k + m < L and ok(i + m, k + m):
                    m += 1
                if m < need:
                    continue
                span = flows[i:i + m] if pattern.carrier == "dst-port" else flows[i:i + m + 1]
                dsts = {f.dst for f in span}
                if len(dsts) == 1 and None not in dsts:
                    d = dsts.pop()
                    best[d] = max(best.get(d, 0), m)
    claims = ClaimList()
    for d, m in sorted(best.items()):
        claims.append(MappingClaim(format_ipv4(d), target, "injection", m / L,
                                   bits=32, cls=FieldClass.IPV4_DST))
    if not claims:
        claims.note = "pattern not found"
    return claims


# -- ground truth ------------------------------------------------------------------

TRUTH_TAGS = (Tag.ADDRESS, Tag.PORT, Tag.TEXT)


class GroundTruth:
    """Raw/anonymized value pairs per field class.

    Serialized as ``raw<TAB>anonymized<TAB>class`` lines.
    """

    def __init__(self, rows: Iterable[tuple[str, str, str]] = ()):
        self.rows: set[tuple[str, str, str]] = set()
        self.preimages: dict[tuple[str, str], set[str]] = defaultdict(set)
        for raw, anon, cls in rows:
            self.add(raw, anon, cls)

    def add(self, raw: str, anon: str, cls: str) -> None:
        self.rows.add((raw, anon, cls))
        self.preimages[(cls, anon)].add(raw)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[LogStream, LogStream]]) -> "GroundTruth":
        gt = cls()
        for raw, anon in pairs:
            gt.update(raw.records, anon.records)
        return gt

    def update(self, raw_records, anon_records) -> None:
        for r, a in zip(raw_records, anon_records):
            for (name, fv), (_, av) in zip(r.fields, a.fields):
                if fv.tag in TRUTH_TAGS:
                    self.add(render_value(r.schema_id, fv), render_value(a.schema_id, av),
                             fv.cls.value)

    def identifies(self, cls: FieldClass, anon: str, raw: str) -> bool:
        """True iff ``anon`` stands for ``raw`` and nothing else."""
        return self.preimages.get((cls.value, anon)) == {raw}

    def prefix_ok(self, cls: FieldClass, anon: str, prefix: int, bits: int) -> bool:
        pre = self.preimages.get((cls.value, anon))
        if not pre or len(pre) != 1:
            return False
        (raw,) = pre
        return truncate(parse_ipv4(raw), bits) == truncate(prefix, bits)

    def raw_values(self, cls: FieldClass) -> set[str]:
        return {r for r, _, c in self.rows if c == cls.value}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for raw, anon, cls in sorted(self.rows, key=lambda t: (t[2], t[0], t[1])):
                f.write(f"{raw}\t{anon}\t{cls}\n")

    @classmethod
    def read(cls, path) -> "GroundTruth":
        rows = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected raw<TAB>anonymized<TAB>class")
                FieldClass(parts[2])
                rows.append(tuple(parts))
        return cls(rows)


# -- scoring ------------------------------------------------------------------

@dataclass
class AttackResult:
    name: str
    claims: ClaimList
    targets: int
    tp: int
    fp: int
    correct: list[bool] = field(default_factory=list)

    @property
    def note(self) -> Optional[str]:
        return self.claims.note

    @property
    def carrier_destroyed(self) -> bool:
        return self.claims.carrier_destroyed

    @property
    def rate(self) -> float:
        return self.tp / self.targets if self.targets else 0.0


def score_values(name: str, claims: ClaimList, truth: GroundTruth, targets: set[str]) -> AttackResult:
    """Score full-value claims; each raw target counts once."""
    hit = set()
    correct = []
    for c in claims:
        ok = c.raw in targets and truth.identifies(c.cls, c.anonymized, c.raw)
        correct.append(ok)
        if ok:
            hit.add(c.raw)
    tp = len(hit)
    return AttackResult(name, claims, len(targets), tp, len(claims) - correct.count(True), correct)


def score_prefix(name: str, claims: ClaimList, truth: GroundTruth, targets: set[str]) -> AttackResult:
    hit = set()
    correct = []
    for c in claims:
        ok = truth.prefix_ok(c.cls, c.anonymized, c.raw_address, c.bits)
        if ok:
            (raw,) = truth.preimages[(c.cls.value, c.anonymized)]
            ok = raw in targets
            if ok:
                hit.add(raw)
        correct.append(ok)
    return AttackResult(name, claims, len(targets), len(hit),
                        len(claims) - correct.count(True), correct)


def score_occurrences(name: str, claims: ClaimList, truth: GroundTruth,
                      targets: set[str]) -> AttackResult:
    """Score per-location claims against the raw locations in ``targets``."""
    correct = []
    for c in claims:
        correct.append(c.where in targets and truth.identifies(c.cls, c.anonymized, c.raw))
    tp = correct.count(True)
    return AttackResult(name, claims, len(targets), tp, len(claims) - tp, correct)


# -- evaluation ------------------------------------------------------------------

@dataclass
class AttackReport:
    profile_name: str
    profile_digest: str
    results: dict[str, AttackResult]
    applied: dict[str, object] = field(default_factory=dict)

    @property
    def carrier_destroyed(self) -> list[str]:
        return [n for n, r in self.results.items() if r.carrier_destroyed]

    def tp(self, attack: str) -> int:
        return self.results[attack].tp

    def summary(self) -> str:
        lines = [f"profile {self.profile_name} ({self.profile_digest})"]
        for name, r in self.results.items():
            line = (f"  {name:<18} tp={r.tp} fp={r.fp} targets={r.targets} "
                    f"rate={r.rate:.3f}")
            if r.note:
                line += f"  [{r.note}]"
            lines.append(line)
        return "\n".join(lines)

    def to_element(self) -> ET.Element:
        root = ET.Element("report", profile=self.profile_name, digest=self.profile_digest)
        for name, r in self.results.items():
            el = ET.SubElement(root, "attack", name=name, tp=str(r.tp), fp=str(r.fp),
                               targets=str(r.targets))
            if r.note:
                el.set("note", r.note)
            for d in r.claims.detections:
                ET.SubElement(el, "detection", **{k: str(v) for k, v in d.items()})
            # Claimed raw values stay out of reports; correctness is recorded instead.
            for c, ok in zip(r.claims, r.correct):
                attrs = {"anonymized": c.anonymized, "evidence": c.evidence,
                         "confidence": f"{c.confidence:.4f}", "correct": str(ok).lower()}
                if c.bits is not None:
                    attrs["bits"] = str(c.bits)
                if c.where:
                    attrs["where"] = c.where
                ET.SubElement(el, "claim", **attrs)
        return root

    def to_xml(self) -> str:
        root = self.to_element()
        ET.indent(root)
        return ET.tostring(root, encoding="unicode") + "\n"


def _known_from_reference(ref: LogStream, index: int, name: str, raw: str) -> MappingClaim:
    rec = ref.records[index]
    fv = rec[name]
    return MappingClaim(render_value(rec.schema_id, fv), raw, "propagation", 1.0,
                        cls=fv.cls, role=field_role(rec.schema_id, name),
                        where=f"{ref.source}:{index}:{name}")


def evaluate(
    suite,
    profile: Profile,
    keys: Mapping[str, AnonKey],
    attacks: Sequence[str] = ATTACKS,
) -> AttackReport:
    """Anonymize ``suite`` under ``profile`` and score the selected attacks.

    The attacker's prior knowledge is what the suite declares: the known
    web server identity, the injected patterns and targets, and one
    revealed reference record. Address anchors for the structure and prefix
    attacks come from the fingerprinting step, as an attacker would get
    them.
    """
    unknown = set(attacks) - set(ATTACKS)
    if unknown:
        raise ValueError(f"unknown attacks: {sorted(unknown)}")
    anon = {}
    applied = {}
    for name, raw in suite.streams.items():
        anon[name], applied[name] = apply_profile(raw, profile, keys)
    truth = GroundTruth.from_pairs((suite.streams[n], anon[n]) for n in suite.streams)
    flows = anon[suite.flow_stream]
    results: dict[str, AttackResult] = {}

    fp_claims = fingerprint_servers(flows, [suite.web_server], suite.service_port,
                                    suite.threshold)
    if "fingerprint" in attacks:
        results["fingerprint"] = score_values("fingerprint", fp_claims, truth, {suite.web_server})

    if "structure" in attacks:
        c = recognize_scan_structure(flows, fp_claims)
        results["structure"] = score_values("structure", c, truth, set(suite.scan_targets))

    if "prefix" in attacks:
        internal = anon[suite.internal_stream]
        raw_internal = suite.streams[suite.internal_stream]
        addrs = sorted({format_ipv4(v) for r in internal.records
                        for _, fv in r.of_class(FieldClass.IPV4_DST) for v in (fv.value,)})
        targets = {format_ipv4(fv.value) for r in raw_internal.records
                   for _, fv in r.of_class(FieldClass.IPV4_DST)} - {suite.web_server}
        try:
            c = propagate_prefix_bits(addrs, fp_claims)
        except NoKnownMapping:
            c = ClaimList(note="no known mapping to propagate from",
                          carrier_destroyed=fp_claims.carrier_destroyed)
        results["prefix"] = score_prefix("prefix", c, truth, targets)

    if "propagation" in attacks or "propagation-cross" in attacks:
        ref_name, idx, fname, raw_value = suite.reference
        known = _known_from_reference(anon[ref_name], idx, fname, raw_value)
        logs = [anon[n] for n in suite.propagation_streams]
        c = propagate_known_mappings(logs, known)
        same_role, other_role = set(), set()
        for n in suite.propagation_streams:
            s = suite.streams[n]
            label = s.source or n
            for r_idx, rec in enumerate(s.records):
                for name, fv in rec.of_class(known.cls):
                    if fv.value != raw_value:
                        continue
                    loc = f"{label}:{r_idx}:{name}"
                    (same_role if field_role(rec.schema_id, name) == known.role
                     else other_role).add(loc)
        same = ClaimList((x for x in c if x.role == known.role), note=c.note)
        cross = ClaimList((x for x in c if x.role != known.role), note=c.note)
        if "propagation" in attacks:
            results["propagation"] = score_occurrences("propagation", same, truth, same_role)
        if "propagation-cross" in attacks:
            results["propagation-cross"] = score_occurrences("propagation-cross", cross, truth,
                                                             other_role)

    if "injection" in attacks:
        c = inject_detect(flows, suite.port_pattern, suite.port_target)
        results["injection"] = score_values("injection", c, truth, {suite.port_target})

    if "injection-timing" in attacks:
        c = inject_detect(flows, suite.timing_pattern, suite.timing_target)
        results["injection-timing"] = score_values("injection-timing", c, truth,
                                                   {suite.timing_target})

    return AttackReport(profile.name, profile.digest, results, applied)


def carrier_classes(group: str) -> tuple[FieldClass, ...]:
    if group in GROUPS:
        return GROUPS[group]
    return (FieldClass(group),)


@dataclass
class MatrixRow:
    profile: str
    attack: str
    carrier: str
    tp_by_level: list[int]

    @property
    def monotone(self) -> bool:
        t = self.tp_by_level
        return all(b <= a for a, b in zip(t, t[1:]))


def monotonicity_matrix(
    suite,
    profiles: Sequence[Profile],
    keys: Mapping[str, AnonKey],
    attacks: Sequence[str] = ATTACKS,
) -> list[MatrixRow]:
    """TP count of each attack as each of its carrier classes walks its ladder.

    All other classes keep the profile's assignment.
    """
    rows = []
    cache: dict[str, AttackReport] = {}
    for prof in profiles:
        for attack in attacks:
            for group in ATTACK_CARRIERS[attack]:
                classes = carrier_classes(group)
                ladder = LADDERS[CLASS_LADDER[classes[0]]]
                tps = []
                for level in range(len(ladder)):
                    variant = prof.with_level(classes, level)
                    rep = cache.get(variant.digest)
                    if rep is None:
                        rep = cache[variant.digest] = evaluate(suite, variant, keys)
                    tps.append(rep.tp(attack))
                rows.append(MatrixRow(prof.name, attack, group, tps))
    return rows


def matrix_to_xml(rows: Sequence[MatrixRow]) -> str:
    root = ET.Element("matrix", monotone=str(all(r.monotone for r in rows)).lower())
    for r in rows:
        el = ET.SubElement(root, "row", profile=r.profile, attack=r.attack, carrier=r.carrier,
                           monotone=str(r.monotone).lower())
        for level, tp in enumerate(r.tp_by_level):
            ET.SubElement(el, "level", n=str(level), tp=str(tp))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


# -- attacks over arbitrary anonymized logs ------------------------------------------

HINTS = {
    "server": "raw address of the known server (fingerprint anchor)",
    "service-port": "port the known server answers on (default 80)",
    "threshold": "fingerprint traffic-share threshold (default 0.95)",
    "known": "ANON=RAW known full address mapping; repeatable",
    "scan-net": "raw a.b.c.0/24 expected to be scanned (structure targets)",
    "inject-target": "raw address the port pattern was sent to",
    "inject-seed": "seed when the port pattern came from the seeded generator",
    "inject-length": "port pattern length (default 15)",
    "timing-target": "raw address the timing pattern was sent to",
    "timing-length": "timing pattern length (default 8)",
    "timing-gap": "timing pattern base gap in seconds (default 10)",
    "pseudonym": "ANON=RAW revealed pseudonym for known-mapping propagation",
    "role": "field role the revealed pseudonym was seen in (default authuser)",
}


def _pairs(values: Sequence[str], hint: str) -> list[tuple[str, str]]:
    out = []
    for v in values:
        anon, eq, raw = v.partition("=")
        if not eq:
            raise ValueError(f"hint {hint} expects ANON=RAW, got {v!r}")
        out.append((anon, raw))
    return out


def _needs(name: str, hint: str) -> AttackResult:
    return AttackResult(name, ClaimList(note=f"needs hint {hint}"), 0, 0, 0)


def run_attacks(
    streams: Sequence[LogStream],
    truth: GroundTruth,
    attacks: Sequence[str],
    hints: Mapping[str, Sequence[str]],
    label: str = "",
) -> AttackReport:
    """Run attacks on already-anonymized streams, scored by value.

    ``hints`` holds the attacker's prior knowledge (see :data:`HINTS`); an
    attack whose hint is missing is reported as such, not failed.
    """
    unknown = set(attacks) - set(ATTACKS)
    if unknown:
        raise ValueError(f"unknown attacks: {sorted(unknown)}")
    bad = set(hints) - set(HINTS)
    if bad:
        raise ValueError(f"unknown hints: {sorted(bad)}")

    def one(name, default=None):
        v = hints.get(name)
        return v[-1] if v else default

    flows = [s for s in streams if s.schema_id in ("netflow", "iptables")]
    flow = flows[0] if flows else LogStream("netflow", ())
    if len(flows) > 1:
        flow = LogStream(flows[0].schema_id,
                         tuple(r for s in flows for r in s.records), source="merged")
    known = [MappingClaim(a, r, "fingerprint", 1.0, bits=32, cls=FieldClass.IPV4_DST)
             for a, r in _pairs(hints.get("known", ()), "known")]
    fp = ClaimList()
    server = one("server")
    if server:
        fp = fingerprint_servers(flow, [server], int(one("service-port", 80)),
                                 float(one("threshold", 0.95)))
    anchors = known + list(fp)
    results: dict[str, AttackResult] = {}
    for name in attacks:
        if name == "fingerprint":
            results[name] = (score_values(name, fp, truth, {server}) if server
                             else _needs(name, "server"))
        elif name == "structure":
            c = recognize_scan_structure(flow, anchors)
            net = one("scan-net")
            if net:
                base = truncate(parse_ipv4(net.partition("/")[0]), 24)
                targets = {format_ipv4(base + i) for i in range(256)}
            else:
                targets = {x.raw for x in c}
            results[name] = score_values(name, c, truth, targets)
        elif name == "prefix":
            addrs = sorted({fv.value for r in flow.records
                            for _, fv in r.of_class(FieldClass.IPV4_DST)})
            try:
                c = propagate_prefix_bits(addrs, anchors)
            except NoKnownMapping:
                c = ClaimList(note="no known mapping to propagate from",
                              carrier_destroyed=fp.carrier_destroyed)
            targets = truth.raw_values(FieldClass.IPV4_DST) - {x.raw for x in anchors}
            results[name] = score_prefix(name, c, truth, targets)
        elif name in ("propagation", "propagation-cross"):
            pairs = _pairs(hints.get("pseudonym", ()), "pseudonym")
            if not pairs:
                results[name] = _needs(name, "pseudonym")
                continue
            anon, raw = pairs[-1]
            k = MappingClaim(anon, raw, "propagation", cls=FieldClass.USER_ID,
                             role=one("role", "authuser"))
            c = propagate_known_mappings(streams, k)
            same = name == "propagation"
            c = ClaimList((x for x in c if (x.role == k.role) == same), note=c.note)
            locs = {x.where for x in c}
            results[name] = score_occurrences(name, c, truth, locs)
        elif name == "injection":
            target = one("inject-target")
            if not target:
                results[name] = _needs(name, "inject-target")
                continue
            seed = one("inject-seed")
            pat = InjectionPattern("seeded-prng" if seed else "fibonacci", "dst-port",
                                   int(one("inject-length", 15)), seed)
            results[name] = score_values(name, inject_detect(flow, pat, target), truth, {target})
        else:
            target = one("timing-target")
            if not target:
                results[name] = _needs(name, "timing-target")
                continue
            pat = InjectionPattern("fibonacci", "inter-arrival", int(one("timing-length", 8)),
                                   base_gap_s=float(one("timing-gap", 10)))
            results[name] = score_values(name, inject_detect(flow, pat, target), truth, {target})
    return AttackReport(label or "anonymized-input", "-", results)
