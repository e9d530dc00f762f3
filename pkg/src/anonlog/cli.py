"""Command-line entry point: ``anonlog keygen|anonymize|validate|attack``.

Exit statuses::

    0  success
    1  a line was rejected in --strict mode
    2  refusing to overwrite an existing key
    3  unreadable input or missing ground truth
    4  invalid profile
    5  missing key
    6  a selected attack's carrier field was destroyed by the profile

Data goes to --output (or stdout); reports and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import xml.etree.ElementTree as ET
from collections import defaultdict
from itertools import islice
from pathlib import Path
from typing import Iterator, Optional, Sequence, TextIO

from . import __version__
from .attacks import (
    ATTACKS,
    HINTS,
    GroundTruth,
    evaluate,
    matrix_to_xml,
    monotonicity_matrix,
    run_attacks,
)
from .keys import KeyFileError, read_key, write_key
from .parsers import (
    DEFAULT_SYSLOG_YEAR,
    REGISTRY,
    ParseError,
    Rejected,
    parse_line,
    serialize,
)
from .policy import (
    BUILTIN_PROFILES,
    AppliedProfileReport,
    MissingKeyError,
    Profile,
    LineWorkerPool,
    ProfileError,
    apply_profile,
    count_transformed,
    load_keys,
    load_profile,
    builtin_profile_text,
    stream_to_xml,
)
from .primitives import AnonKey
from .record import LogStream

OK, STRICT_REJECT, REFUSED, UNREADABLE, BAD_PROFILE, MISSING_KEY, CARRIER_DESTROYED = range(7)

CHUNK_LINES = 20_000
ENCODING = dict(encoding="utf-8", errors="surrogateescape", newline="")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def resolve_profile(ref: str) -> tuple[Profile, Optional[Path]]:
    """A built-in profile name or a path; returns the profile and its directory."""
    if ref in BUILTIN_PROFILES and not Path(ref).exists():
        return load_profile(builtin_profile_text(ref)), None
    path = Path(ref)
    return load_profile(path.read_text(encoding="utf-8")), path.parent


def key_dir(args, profile_dir: Optional[Path]) -> Optional[Path]:
    if args.keys:
        return Path(args.keys)
    env = os.environ.get("ANON_KEY_DIR")
    if env:
        return Path(env)
    return profile_dir


def _lines(f: TextIO) -> Iterator[tuple[str, str]]:
    """(line without terminator, terminator) pairs."""
    for raw in f:
        if raw.endswith("\r\n"):
            yield raw[:-2], "\r\n"
        elif raw.endswith("\n"):
            yield raw[:-1], "\n"
        else:
            yield raw, ""


def _load_profile_and_keys(args):
    try:
        profile, pdir = resolve_profile(args.profile)
    except ProfileError as e:
        _err(f"invalid profile: {e}")
        return None, None, BAD_PROFILE
    except OSError as e:
        _err(f"cannot read profile: {e}")
        return None, None, BAD_PROFILE
    try:
        keys = load_keys(profile, key_dir(args, pdir))
    except (MissingKeyError, KeyFileError, OSError) as e:
        _err(f"missing key: {e.args[0] if e.args else e}")
        return None, None, MISSING_KEY
    return profile, keys, OK


# -- keygen --------------------------------------------------------------------

def cmd_keygen(args) -> int:
    try:
        write_key(args.path, AnonKey.generate(args.key_id or Path(args.path).stem), args.force)
    except FileExistsError:
        _err(f"refusing to overwrite {args.path} (use --force)")
        return REFUSED
    except OSError as e:
        _err(f"cannot write key: {e}")
        return UNREADABLE
    return OK


# -- validate ------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        profile, _ = resolve_profile(args.profile)
    except ProfileError as e:
        _err(str(e))
        return BAD_PROFILE
    except OSError as e:
        _err(f"cannot read profile: {e}")
        return BAD_PROFILE
    sys.stdout.write(profile.normalized())
    return OK


# -- anonymize -------------------------------------------------------------------

class _Reporter:
    def __init__(self, profile: Profile):
        self.profile = profile
        self.records = 0
        self.rejected = 0
        self.saturated = 0
        self.transformed: dict[str, int] = defaultdict(int)
        self.sequential = profile.uses_enumerate

    def count(self, transformed) -> None:
        for k, v in transformed.items():
            self.transformed[k] += v

    def final(self) -> AppliedProfileReport:
        return AppliedProfileReport(self.records + self.rejected, self.records, self.rejected,
                                    dict(self.transformed), self.profile.digest,
                                    self.saturated, self.sequential)


def _anonymize_file(path: str, args, profile, keys, out: TextIO, rep: _Reporter,
                    xml_root: Optional[ET.Element], truth: Optional[GroundTruth]) -> None:
    source = Path(path).name
    year = args.year or profile.year or DEFAULT_SYSLOG_YEAR
    # Enumeration ranks the whole stream, so it is read in one piece.
    whole = profile.uses_enumerate or xml_root is not None
    pool = None
    if args.workers and args.workers > 1 and not whole and truth is None:
        pool = LineWorkerPool(args.workers, args.schema, year, profile, keys, source)
    try:
        with open(path, **ENCODING) as f:
            lines = _lines(f)
            lineno = 0
            while True:
                block = list(lines) if whole else list(islice(lines, CHUNK_LINES))
                if not block:
                    break
                if pool is not None:
                    lineno = _run_pooled(pool, block, lineno, source, args, out, rep)
                else:
                    lineno = _run_block(block, lineno, source, year, args, profile, keys,
                                        out, rep, xml_root, truth)
                if whole:
                    break
    finally:
        if pool is not None:
            pool.close()


def _reject(rep: _Reporter, source: str, lineno: int, reason: str, strict: bool) -> None:
    _err(f"{source}:{lineno}\t{reason}")
    rep.rejected += 1
    if strict:
        raise ParseError(lineno, reason)


def _run_block(block, lineno, source, year, args, profile, keys, out, rep, xml_root, truth):
    records, ends = [], []
    for text, end in block:
        lineno += 1
        rec = parse_line(args.schema, text, year)
        if isinstance(rec, Rejected):
            _reject(rep, source, lineno, rec.reason, args.strict)
            continue
        records.append(rec)
        ends.append(end)
    raw = LogStream(args.schema, tuple(records), source=source)
    anon, report = apply_profile(raw, profile, keys, workers=args.workers)
    rep.records += report.records_out
    rep.saturated += report.saturated
    rep.count(count_transformed(raw.records, profile))
    if truth is not None:
        truth.update(raw.records, anon.records)
    if xml_root is not None:
        xml_root.append(stream_to_xml(anon, profile))
    else:
        for rec, end in zip(anon.records, ends):
            out.write(serialize(rec) + end)
    return lineno


def _run_pooled(pool, block, lineno, source, args, out, rep):
    results, sat, counts = pool.run([text for text, _ in block])
    rep.saturated += sat
    rep.count(counts)
    for (_, end), res in zip(block, results):
        lineno += 1
        if isinstance(res, Rejected):
            _reject(rep, source, lineno, res.reason, args.strict)
            continue
        rep.records += 1
        out.write(res + end)
    return lineno


def cmd_anonymize(args) -> int:
    profile, keys, status = _load_profile_and_keys(args)
    if status:
        return status
    for p in args.inputs:
        if not os.access(p, os.R_OK) or not os.path.isfile(p):
            _err(f"cannot read input {p}")
            return UNREADABLE
    rep = _Reporter(profile)
    truth = GroundTruth() if args.truth else None
    xml_root = ET.Element("logs") if args.mode == "xml" else None
    tmp = None
    if args.output:
        tmp = Path(args.output).with_name(Path(args.output).name + ".partial")
        out = open(tmp, "w", **ENCODING)
    else:
        out = sys.stdout
    try:
        for p in args.inputs:
            _anonymize_file(p, args, profile, keys, out, rep, xml_root, truth)
        if xml_root is not None:
            root = xml_root[0] if len(xml_root) == 1 else xml_root
            ET.indent(root)
            out.write(ET.tostring(root, encoding="unicode") + "\n")
    except ParseError as e:
        _err(f"strict mode: {e}")
        if tmp:
            out.close()
            tmp.unlink()
        return STRICT_REJECT
    except OSError as e:
        _err(f"cannot read input: {e}")
        if tmp:
            out.close()
            tmp.unlink()
        return UNREADABLE
    except MissingKeyError as e:
        _err(f"missing key: {e.args[0]}")
        return MISSING_KEY
    if tmp:
        out.close()
        os.replace(tmp, args.output)
    if truth is not None:
        truth.write(args.truth)
    _err(rep.final().summary())
    return OK


# -- attack ----------------------------------------------------------------------

def _parse_hints(items: Sequence[str]) -> dict[str, list[str]]:
    hints: dict[str, list[str]] = defaultdict(list)
    for item in items:
        k, eq, v = item.partition("=")
        if not eq or k not in HINTS:
            raise ValueError(f"bad hint {item!r}; known hints: {', '.join(HINTS)}")
        hints[k].append(v)
    return dict(hints)


def _write(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _evaluate(args, attacks) -> int:
    from .fixtures import attack_suite

    names = args.profile or list(BUILTIN_PROFILES)
    profiles, keys = [], {}
    for ref in names:
        args.profile = ref
        prof, k, status = _load_profile_and_keys(args)
        if status:
            return status
        profiles.append(prof)
        keys.update(k)
    if "main" not in keys:
        # Matrix variants move keyless profiles onto keyed levels under "main".
        path = (key_dir(args, None) or Path(".")) / "main.key"
        if path.exists():
            keys["main"] = read_key(path, "main")
    suite = attack_suite(seed=args.seed, background=args.background)
    try:
        if args.matrix:
            rows = monotonicity_matrix(suite, profiles, keys, attacks)
        else:
            reports = [evaluate(suite, prof, keys, attacks) for prof in profiles]
    except MissingKeyError as e:
        _err(f"missing key: {e.args[0]} (put main.key in the key directory)")
        return MISSING_KEY
    if args.matrix:
        for r in rows:
            flag = "ok" if r.monotone else "NOT MONOTONE"
            _err(f"{r.profile:<17} {r.attack:<18} {r.carrier:<9} "
                 f"{' '.join(map(str, r.tp_by_level)):<28} {flag}")
        _write(matrix_to_xml(rows), args.output)
        return OK
    root = ET.Element("reports")
    for rep in reports:
        _err(rep.summary())
        root.append(rep.to_element())
    ET.indent(root)
    text = ET.tostring(root, encoding="unicode") + "\n"
    if args.output and len(profiles) > 1 and Path(args.output).is_dir():
        for el, prof in zip(root, profiles):
            Path(args.output, f"{prof.name}.xml").write_text(
                ET.tostring(el, encoding="unicode") + "\n", encoding="utf-8")
    else:
        _write(text, args.output)
    return OK


def cmd_attack(args) -> int:
    attacks = [a for a in (args.attack or ",".join(ATTACKS)).split(",") if a]
    bad = [a for a in attacks if a not in ATTACKS]
    if bad:
        _err(f"unknown attack(s): {', '.join(bad)}; choose from {', '.join(ATTACKS)}")
        return UNREADABLE
    if args.evaluate or args.matrix:
        return _evaluate(args, attacks)
    if not args.truth or not os.path.isfile(args.truth):
        _err(f"missing ground truth {args.truth or '(none given)'}")
        return UNREADABLE
    if not args.schema:
        _err("--schema is required for attacks on input files")
        return UNREADABLE
    try:
        truth = GroundTruth.read(args.truth)
        hints = _parse_hints(args.hint)
        streams = []
        for p in args.inputs:
            with open(p, **ENCODING) as f:
                recs = []
                for text, _ in _lines(f):
                    r = parse_line(args.schema, text, args.year or DEFAULT_SYSLOG_YEAR)
                    if not isinstance(r, Rejected):
                        recs.append(r)
            streams.append(LogStream(args.schema, tuple(recs), source=Path(p).name))
    except (OSError, ValueError) as e:
        _err(str(e))
        return UNREADABLE
    report = run_attacks(streams, truth, attacks, hints,
                         label=",".join(Path(p).name for p in args.inputs))
    _err(report.summary())
    _write(report.to_xml(), args.output)
    if report.carrier_destroyed:
        _err(f"carrier destroyed for: {', '.join(report.carrier_destroyed)}")
        return CARRIER_DESTROYED
    return OK


# -- argument parsing ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anonlog", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"anonlog {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="write a fresh 256-bit key file")
    k.add_argument("path")
    k.add_argument("--key-id", help="identifier stored in the sidecar (default: file stem)")
    k.add_argument("--force", action="store_true", help="overwrite an existing key")
    k.set_defaults(func=cmd_keygen)

    v = sub.add_parser("validate", help="check a profile and print its normalized form")
    v.add_argument("profile", help="profile file or built-in name")
    v.set_defaults(func=cmd_validate)

    schemas = sorted(REGISTRY)

    a = sub.add_parser("anonymize", help="apply a profile to log files")
    a.add_argument("inputs", nargs="+")
    a.add_argument("--schema", required=True, choices=schemas)
    a.add_argument("--profile", required=True, help="profile file or built-in name "
                   f"({', '.join(BUILTIN_PROFILES)})")
    a.add_argument("--keys", help="key directory (default: $ANON_KEY_DIR, then the "
                   "profile's directory)")
    a.add_argument("--output", help="output file (default: stdout)")
    a.add_argument("--mode", choices=("native", "xml"), default="native")
    a.add_argument("--strict", action="store_true", help="fail on the first rejected line")
    a.add_argument("--workers", type=int, default=None, help="worker processes")
    a.add_argument("--truth", help="also write a raw/anonymized ground-truth sidecar")
    a.add_argument("--year", type=int, default=None, help="year for syslog timestamps")
    a.set_defaults(func=cmd_anonymize)

    t = sub.add_parser("attack", help="run de-anonymization attacks")
    t.add_argument("inputs", nargs="*", help="anonymized log files")
    t.add_argument("--schema", choices=schemas)
    t.add_argument("--attack", help=f"comma-separated subset of {','.join(ATTACKS)}")
    t.add_argument("--truth", help="ground-truth sidecar (raw<TAB>anonymized<TAB>class)")
    t.add_argument("--hint", action="append", default=[], metavar="KEY=VALUE",
                   help="attacker prior knowledge: " + "; ".join(f"{k}: {v}" for k, v in HINTS.items()))
    t.add_argument("--output", help="report file or directory (default: stdout)")
    t.add_argument("--evaluate", action="store_true",
                   help="anonymize the built-in fixture suite under each --profile and score")
    t.add_argument("--matrix", action="store_true",
                   help="with --evaluate: walk each carrier class up its ladder")
    t.add_argument("--profile", action="append", help="profile for --evaluate; repeatable "
                   "(default: all built-in profiles)")
    t.add_argument("--keys", help="key directory for --evaluate")
    t.add_argument("--seed", type=int, default=7, help="fixture seed for --evaluate")
    t.add_argument("--background", type=int, default=10_000,
                   help="background flows in the fixture for --evaluate")
    t.add_argument("--year", type=int, default=None)
    t.set_defaults(func=cmd_attack)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
