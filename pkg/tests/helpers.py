"""Profile builders shared by the test modules."""

from anonlog.policy import load_profile
from anonlog.record import FieldClass

ALL_ZERO = "".join(f"field {c.value} level 0\n" for c in FieldClass)
GROUP_MEMBERS = {"ipv4": ("ipv4-src", "ipv4-dst", "ipv4-other"), "port": ("port-src", "port-dst")}


def prof(body, scope="cross-log"):
    return load_profile(f"profile t\nscope {scope}\nkey main main.key\n" + body)


def with_level(body, scope="cross-log"):
    """Everything at level 0 except the ``field`` lines in ``body``."""
    lines = ALL_ZERO
    for line in body.strip().splitlines():
        subject = line.split()[1]
        for c in GROUP_MEMBERS.get(subject, (subject,)):
            lines = lines.replace(f"field {c} level 0\n", "")
    return prof(lines + body, scope)
