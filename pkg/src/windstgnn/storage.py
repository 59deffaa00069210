"""On-disk formats: key=value manifests and little-endian float64 arrays.

A standalone array file is one ASCII header line ``f64 shape=2,3``
followed by the raw payload. A container (checkpoints, prediction files)
is a magic line, ``key=value`` manifest lines, a blank line, then named
arrays, each introduced by ``array <name> dtype=f64 shape=<dims>``.
"""

from __future__ import annotations

import io
import os
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"WSTGNN-CONTAINER 1\n"


class FormatError(ValueError):
    pass


def _shape_text(shape) -> str:
    return ",".join(str(int(n)) for n in shape)


def _parse_shape(text: str) -> tuple[int, ...]:
    return tuple(int(n) for n in text.split(",")) if text else ()


def _payload(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_payload(fh, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    buf = fh.read(8 * count)
    if len(buf) != 8 * count:
        raise FormatError("truncated array payload")
    return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)


def write_array(path: str | os.PathLike, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(f"f64 shape={_shape_text(arr.shape)}\n".encode())
        fh.write(_payload(arr))


def read_array(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        if len(header) != 2 or header[0] != "f64" or not header[1].startswith("shape="):
            raise FormatError(f"{path}: bad array header")
        return _read_payload(fh, _parse_shape(header[1][len("shape="):]))


def write_manifest(path: str | os.PathLike, manifest: Mapping[str, object]) -> None:
    Path(path).write_text("".join(f"{k}={_fmt(v)}\n" for k, v in manifest.items()))


def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    return parse_manifest(Path(path).read_text())


def parse_manifest(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"manifest line without '=': {line!r}")
        out[key.strip()] = value.strip()
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in v)
    return str(v)


def floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")]) if text else np.zeros(0)


def dumps_container(manifest: Mapping[str, object], arrays: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    for k, v in manifest.items():
        text = _fmt(v)
        if "\n" in text or "=" in k:
            raise FormatError(f"manifest entry {k!r} not representable")
        buf.write(f"{k}={text}\n".encode())
    buf.write(b"\n")
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        buf.write(f"array {name} dtype=f64 shape={_shape_text(arr.shape)}\n".encode())
        buf.write(_payload(arr))
    return buf.getvalue()


def loads_container(data: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    fh = io.BytesIO(data)
    if fh.readline() != MAGIC:
        raise FormatError("not a container file")
    manifest: dict[str, str] = {}
    while True:
        line = fh.readline()
        if not line:
            raise FormatError("unterminated manifest")
        line = line.decode().rstrip("\n")
        if not line:
            break
        key, _, value = line.partition("=")
        manifest[key] = value
    arrays: dict[str, np.ndarray] = {}
    while True:
        line = fh.readline()
        if not line:
            break
        parts = line.decode().split()
        if len(parts) != 4 or parts[0] != "array" or parts[2] != "dtype=f64":
            raise FormatError(f"bad array header {line!r}")
        arrays[parts[1]] = _read_payload(fh, _parse_shape(parts[3][len("shape="):]))
    return manifest, arrays


def write_container(path, manifest, arrays) -> None:
    Path(path).write_bytes(dumps_container(manifest, arrays))


def read_container(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    return loads_container(Path(path).read_bytes())
