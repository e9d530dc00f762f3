"""Key files: 32 raw bytes plus a ``<path>.id`` sidecar line
``key-id<TAB>sha256-hex-of-key``."""

from __future__ import annotations

import os
from pathlib import Path

from .primitives import KEY_BYTES, AnonKey

SIDECAR_SUFFIX = ".id"


class KeyFileError(ValueError):
    pass


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_key(path, key: AnonKey, force: bool = False) -> None:
    path = Path(path)
    side = sidecar_path(path)
    if not force and (path.exists() or side.exists()):
        raise FileExistsError(str(path))
    flags = os.O_WRONLY | os.O_CREAT | os.O_TRUNC
    fd = os.open(path, flags, 0o600)
    with os.fdopen(fd, "wb") as f:
        f.write(key.material)
    os.chmod(path, 0o600)
    side.write_text(f"{key.key_id}\t{key.digest}\n")


def read_key(path, key_id: str | None = None) -> AnonKey:
    path = Path(path)
    material = path.read_bytes()
    if len(material) != KEY_BYTES:
        raise KeyFileError(f"{path}: key file must be exactly {KEY_BYTES} bytes")
    side = sidecar_path(path)
    stored_id = None
    if side.exists():
        line = side.read_text().strip()
        try:
            stored_id, digest = line.split("\t")
        except ValueError:
            raise KeyFileError(f"{side}: malformed sidecar") from None
        key = AnonKey(material, stored_id)
        if digest != key.digest:
            raise KeyFileError(f"{side}: digest does not match key file")
    kid = key_id or stored_id or path.stem
    return AnonKey(material, kid)
