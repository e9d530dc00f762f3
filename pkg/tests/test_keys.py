import os
import stat

import pytest

from anonlog.keys import KeyFileError, read_key, sidecar_path, write_key
from anonlog.primitives import AnonKey


def test_write_read_round_trip(tmp_path):
    k = AnonKey.generate("lab")
    p = tmp_path / "lab.key"
    write_key(p, k)
    assert p.read_bytes() == k.material
    assert stat.S_IMODE(os.stat(p).st_mode) == 0o600
    assert sidecar_path(p).read_text() == f"lab\t{k.digest}\n"
    assert read_key(p) == k


def test_refuses_overwrite_without_force(tmp_path):
    p = tmp_path / "a.key"
    write_key(p, AnonKey.generate())
    with pytest.raises(FileExistsError):
        write_key(p, AnonKey.generate())
    k = AnonKey.generate("b")
    write_key(p, k, force=True)
    assert read_key(p).material == k.material


def test_digest_mismatch_and_bad_length(tmp_path):
    p = tmp_path / "a.key"
    write_key(p, AnonKey.generate("a"))
    p.write_bytes(bytes(32))
    with pytest.raises(KeyFileError):
        read_key(p)
    q = tmp_path / "short.key"
    q.write_bytes(b"abc")
    with pytest.raises(KeyFileError):
        read_key(q)
