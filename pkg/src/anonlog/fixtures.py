"""Seeded synthetic logs with known ground truth.

Everything here is a pure function of its seed: the attack suite, the
round-trip corpora and the large determinism fixture are regenerated
identically on every run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .attacks import InjectionPattern, flow_line, inject_generate
from .parsers import MONTHS, parse_lines, serialize
from .primitives import USEC
from .record import LogStream, format_ipv4, parse_ipv4

T0 = 1086048000  # 2004-06-01 00:00:00 UTC
DAY = 86400

WEB_SERVER = "192.168.77.29"
SCAN_NET = "192.168.77.0"
SCANNER = "203.0.113.66"
PORT_INJECTOR = "198.51.100.7"
PORT_TARGET = "192.168.77.5"
TIMING_INJECTOR = "198.51.100.8"
TIMING_TARGET = "192.168.77.7"
KNOWN_USER = "emily"

PORT_PATTERN = InjectionPattern("fibonacci", "dst-port", length=15)
TIMING_PATTERN = InjectionPattern("fibonacci", "inter-arrival", length=8, base_gap_s=10.0)

USERS = ("alice", "bob", "carol", "dave", "frank", "grace", "heidi", "ivan")
PATHS = ("/", "/index.html", "/about.html", "/img/logo.png", "/cgi-bin/search?q=x",
         "/docs/a b.pdf", "/login", "/~emily/", "/api/v1/items", "/favicon.ico")
METHODS = ("GET", "GET", "GET", "POST", "HEAD")
STATUSES = (200, 200, 200, 304, 404, 500, 301)


def _external(rng: random.Random) -> str:
    """A public-looking address outside the organization's 192.168/16."""
    while True:
        a = rng.randint(1, 223)
        if a not in (10, 127, 192, 172, 198, 203):
            return f"{a}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}"


def _internal(rng: random.Random, subnets=range(1, 21)) -> str:
    return f"192.168.{rng.choice(list(subnets))}.{rng.randint(1, 254)}"


# -- flow fixtures --------------------------------------------------------------

def background_flow_lines(rng: random.Random, n: int, start: int = T0) -> list[tuple[int, str]]:
    """``n`` random flows between internal clients and external hosts.

    Destination ports are random and never 80, so web traffic stays
    exactly what :func:`web_flow_lines` adds.
    """
    clients = sorted({_internal(rng) for _ in range(60)})
    out = []
    for _ in range(n):
        t = start * USEC + rng.randrange(DAY * USEC)
        dur = rng.randrange(1, 30 * USEC)
        src, dst = rng.choice(clients), _external(rng)
        if rng.random() < 0.3:
            src, dst = dst, src
        dport = rng.randint(1, 65535)
        while dport == 80:
            dport = rng.randint(1, 65535)
        line = flow_line(t, t + dur, src, dst, rng.randint(1024, 65535), dport,
                         rng.choice(("TCP", "UDP")), rng.randint(1, 50), rng.randint(40, 60000))
        out.append((t, line))
    return out


def web_flow_lines(rng: random.Random, to_server: int = 1900, to_others: int = 100,
                   start: int = T0) -> list[tuple[int, str]]:
    """Port-80 flows: ``to_server`` to the web server, the rest elsewhere."""
    clients = sorted({_external(rng) for _ in range(300)})
    others = sorted({_external(rng) for _ in range(5)})
    out = []
    dsts = [WEB_SERVER] * to_server + [rng.choice(others) for _ in range(to_others)]
    rng.shuffle(dsts)
    for dst in dsts:
        t = start * USEC + rng.randrange(DAY * USEC)
        line = flow_line(t, t + rng.randrange(1, 5 * USEC), rng.choice(clients), dst,
                         rng.randint(1024, 65535), 80, "TCP", rng.randint(3, 40),
                         rng.randint(200, 90000))
        out.append((t, line))
    return out


def scan_flow_lines(net: str = SCAN_NET, scanner: str = SCANNER, start: int = T0 + 10 * 3600,
                    step_s: int = 1, port: int = 22) -> list[tuple[int, str]]:
    """Sequential probe of every address in a /24, ``step_s`` apart."""
    base = parse_ipv4(net) & 0xFFFFFF00
    out = []
    for i in range(256):
        t = (start + i * step_s) * USEC
        out.append((t, flow_line(t, t + 1000, scanner, format_ipv4(base + i), 50000 + i, port,
                                 "TCP", 1, 40)))
    return out


def _stream_lines(stream: LogStream) -> list[tuple[int, str]]:
    return [(r["start"].value, serialize(r)) for r in stream.records]


@dataclass
class FixtureSuite:
    """Raw streams plus everything the attacker is assumed to know."""

    streams: dict[str, LogStream]
    flow_stream: str = "org-flows"
    internal_stream: str = "internal-flows"
    propagation_streams: tuple[str, ...] = ("web-a", "web-b", "web-c")
    reference: tuple[str, int, str, str] = ("web-ref", 2, "authuser", KNOWN_USER)
    web_server: str = WEB_SERVER
    service_port: int = 80
    threshold: float = 0.95
    scan_targets: tuple[str, ...] = ()
    port_pattern: InjectionPattern = PORT_PATTERN
    port_target: str = PORT_TARGET
    timing_pattern: InjectionPattern = TIMING_PATTERN
    timing_target: str = TIMING_TARGET
    lines: dict[str, list[str]] = field(default_factory=dict)


def org_flow_lines(seed: int = 7, background: int = 10_000, scan: bool = True,
                   injections: bool = True) -> list[str]:
    """The organization's border flow log, in time order."""
    rng = random.Random(seed)
    items = background_flow_lines(rng, background) + web_flow_lines(rng)
    if scan:
        items += scan_flow_lines()
    if injections:
        items += _stream_lines(inject_generate(PORT_PATTERN, PORT_TARGET, source=PORT_INJECTOR,
                                               start=T0 + 14 * 3600))
        items += _stream_lines(inject_generate(TIMING_PATTERN, TIMING_TARGET,
                                               source=TIMING_INJECTOR, start=T0 + 16 * 3600))
    items.sort(key=lambda p: p[0])
    return [line for _, line in items]


def internal_flow_lines(seed: int = 11, n: int = 2000) -> list[str]:
    """Flows among internal hosts only, including the web server."""
    rng = random.Random(seed)
    hosts = sorted({_internal(rng, subnets=(1, 2, 3, 17, 64, 77, 130, 200)) for _ in range(300)}
                   | {WEB_SERVER})
    items = []
    for _ in range(n):
        t = T0 * USEC + rng.randrange(DAY * USEC)
        src, dst = rng.sample(hosts, 2)
        dport = 80 if dst == WEB_SERVER else rng.choice((22, 53, 139, 445, 443, 8080))
        items.append((t, flow_line(t, t + rng.randrange(1, 10 * USEC), src, dst,
                                   rng.randint(1024, 65535), dport, "TCP",
                                   rng.randint(1, 20), rng.randint(40, 20000))))
    items.sort(key=lambda p: p[0])
    return [line for _, line in items]


# -- web server logs ------------------------------------------------------------

def _clf_time(t: int, tz_minutes: int = 0) -> str:
    d = datetime.fromtimestamp(t + tz_minutes * 60, timezone.utc)
    sign = "+" if tz_minutes >= 0 else "-"
    off = abs(tz_minutes)
    return (f"{d.day:02d}/{MONTHS[d.month - 1]}/{d.year}:{d.hour:02d}:{d.minute:02d}:"
            f"{d.second:02d} {sign}{off // 60:02d}{off % 60:02d}")


def clf_line(host, ident, user, t, request, status, nbytes, tz_minutes=0) -> str:
    return f'{host} {ident} {user} [{_clf_time(t, tz_minutes)}] "{request}" {status} {nbytes}'


def clf_lines(seed: int, n: int, emily_auth: int, emily_ident: int) -> list[str]:
    """Web log lines; ``emily`` authenticates ``emily_auth`` times and
    appears ``emily_ident`` times in the ident column."""
    rng = random.Random(seed)
    roles = ["auth"] * emily_auth + ["ident"] * emily_ident + ["other"] * (n - emily_auth - emily_ident)
    rng.shuffle(roles)
    times = sorted(T0 + rng.randrange(DAY) for _ in range(n))
    out = []
    for t, role in zip(times, roles):
        ident = KNOWN_USER if role == "ident" else "-"
        user = KNOWN_USER if role == "auth" else rng.choice(USERS + ("-", "-"))
        req = f"{rng.choice(METHODS)} {rng.choice(PATHS)} HTTP/1.{rng.randint(0, 1)}"
        status = rng.choice(STATUSES)
        nbytes = "-" if status == 304 else rng.randint(0, 50000)
        out.append(clf_line(_internal(rng), ident, user, t, req, status, nbytes))
    return out


CLF_STREAMS = {
    # name: (seed, lines, emily as authuser, emily as ident)
    "web-a": (21, 400, 12, 3),
    "web-b": (22, 400, 0, 0),
    "web-c": (23, 400, 7, 2),
}


def reference_lines() -> list[str]:
    """The small log in which the attacker learns emily's pseudonym."""
    return [
        clf_line("192.168.1.10", "-", "alice", T0 + 10, "GET / HTTP/1.0", 200, 512),
        clf_line("192.168.1.11", "-", "bob", T0 + 20, "GET /login HTTP/1.0", 200, 120),
        clf_line("192.168.1.12", "-", KNOWN_USER, T0 + 30, "POST /login HTTP/1.0", 302, 0),
        clf_line("192.168.1.13", "-", "carol", T0 + 40, "GET /docs HTTP/1.0", 404, 210),
    ]


def attack_suite(seed: int = 7, background: int = 10_000) -> FixtureSuite:
    """Flow, internal and web logs for :func:`anonlog.attacks.evaluate`."""
    lines = {
        "org-flows": org_flow_lines(seed, background),
        "internal-flows": internal_flow_lines(seed + 4),
        "web-ref": reference_lines(),
    }
    for name, (s, n, a, i) in CLF_STREAMS.items():
        lines[name] = clf_lines(s + seed, n, a, i)
    streams = {}
    for name, ls in lines.items():
        schema = "clf" if name.startswith("web") else "netflow"
        stream, rejects = parse_lines(schema, ls, strict=True, source=name)
        streams[name] = stream
    base = parse_ipv4(SCAN_NET)
    targets = tuple(format_ipv4(base + i) for i in range(256))
    return FixtureSuite(streams, scan_targets=targets, lines=lines)


# -- round-trip corpora -------------------------------------------------------------

def netflow_corpus(n: int = 1200, seed: int = 1) -> list[str]:
    """Flow lines in varied layouts: separators, fraction digits, spacing."""
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        t = T0 * USEC + rng.randrange(DAY * USEC)
        digits = rng.choice((-1, 0, 3, 6))
        cols = []
        for us in (t, t + rng.randrange(60 * USEC)):
            sec, frac = divmod(us, USEC)
            cols.append(str(sec) if digits < 0 else f"{sec}." + f"{frac:06d}"[:digits])
        cols += [_internal(rng) if rng.random() < .5 else _external(rng), _external(rng),
                 str(rng.randint(0, 65535)), str(rng.randint(0, 65535)),
                 rng.choice(("TCP", "UDP", "ICMP", "6", "17")), str(rng.randint(0, 1000)),
                 str(rng.randint(0, 10**9))]
        sep = rng.choice((",", ", ", " ", "\t", " , "))
        line = sep.join(cols)
        if rng.random() < .1:
            line = " " + line + " "
        out.append(line)
    return out


_SYSLOG_MSGS = ("session opened for user root by (uid=0)", "Accepted password for emily from "
                "192.168.3.4 port 22 ssh2", "CRON[1234]: (root) CMD (run-parts /etc/cron.hourly)",
                "kernel: eth0: link up", "", "last message repeated 3 times",
                "ntpd[88]: synchronized to 10.0.0.1, stratum 2")


def _syslog_stamp(rng: random.Random) -> str:
    d = datetime.fromtimestamp(T0 + rng.randrange(200 * DAY), timezone.utc)
    style = rng.choice(("pad0", "space", "plain"))
    if style == "pad0":
        day = f"{d.day:02d}"
    elif style == "space":
        day = f"{d.day:>2}"
    else:
        day = str(d.day)
    return f"{MONTHS[d.month - 1]} {day} {d.hour:02d}:{d.minute:02d}:{d.second:02d}"


def syslog_corpus(n: int = 1200, seed: int = 2) -> list[str]:
    rng = random.Random(seed)
    hosts = ("gw1", "mail.example.org", "db-02", "ns1.campus.edu", "10.1.2.3")
    out = []
    for _ in range(n):
        pri = f"<{rng.randint(0, 191)}>" if rng.random() < .3 else ""
        msg = rng.choice(_SYSLOG_MSGS)
        line = f"{pri}{_syslog_stamp(rng)} {rng.choice(hosts)}"
        if msg or rng.random() < .5:
            line += " " + msg
        out.append(line)
    return out


def clf_corpus(n: int = 1200, seed: int = 3) -> list[str]:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        host = _internal(rng) if rng.random() < .8 else rng.choice(("client.example.com", "proxy-7"))
        req = rng.choice((f"{rng.choice(METHODS)} {rng.choice(PATHS)} HTTP/1.1",
                          "-", r'GET /q?x=\"y\" HTTP/1.0', ""))
        status = rng.choice(STATUSES)
        nbytes = rng.choice(("-", str(rng.randint(0, 99999))))
        out.append(clf_line(host, rng.choice(("-", "ident1")), rng.choice(USERS + ("-",)),
                            T0 + rng.randrange(100 * DAY), req, status, nbytes,
                            rng.choice((0, 60, -300, 330))))
    return out


def iptables_corpus(n: int = 1200, seed: int = 4) -> list[str]:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        src, dst = _external(rng), _internal(rng)
        parts = [f"IN=eth0 OUT=", f"MAC=00:16:3e:{rng.randrange(256):02x}:0a:{rng.randrange(256):02x}"
                 ":08:00", f"SRC={src}", f"DST={dst}", f"LEN={rng.randint(40, 1500)}",
                 "TOS=0x00", f"TTL={rng.randint(30, 128)}"]
        proto = rng.choice(("TCP", "UDP", "ICMP"))
        parts.append(f"PROTO={proto}")
        if proto != "ICMP":
            parts += [f"SPT={rng.randint(1, 65535)}", f"DPT={rng.randint(1, 65535)}"]
        if rng.random() < .1:
            parts += [f"[SRC={_internal(rng)}", f"DST={_external(rng)}]"]
        prefix = rng.choice(("kernel: ", "kernel: [12345.678901] ", "kernel: FW-DROP "))
        out.append(f"{_syslog_stamp(rng)} fw{rng.randint(1, 3)} {prefix}{' '.join(parts)}")
    return out


CORPORA = {
    "netflow": netflow_corpus,
    "syslog": syslog_corpus,
    "clf": clf_corpus,
    "iptables": iptables_corpus,
}


def big_netflow_lines(n: int = 100_000, seed: int = 99) -> list[str]:
    """A large flow log for the determinism and parallelism checks."""
    rng = random.Random(seed)
    items = background_flow_lines(rng, n)
    items.sort(key=lambda p: p[0])
    return [line for _, line in items]
