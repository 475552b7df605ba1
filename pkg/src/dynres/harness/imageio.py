"""Image grid file formats.

``.ppm``/``.pgm``: binary 8-bit pixmaps. Values are mapped linearly from
``[-1, 1]`` to ``[0, 255]`` with round-half-away-from-zero and clipped.

``.drir``: raw tensor, bit-exact round trip::

    b"DRIR" | u16 version | u32 H | u32 W | u32 C | H*W*C float64, row-major

All integers and floats are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..resample import as_grid

MAGIC = b"DRIR"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class ImageFormatError(ValueError):
    pass


def to_bytes(x) -> np.ndarray:
    v = (as_grid(x) + 1.0) * 127.5
    # round half away from zero; values are clipped to >= 0 first
    v = np.floor(np.clip(v, 0.0, 255.0) + 0.5)
    return v.astype(np.uint8)


def from_bytes(b) -> np.ndarray:
    return np.asarray(b, dtype=np.float64) / 127.5 - 1.0


def write_raw(path, x) -> Path:
    x = as_grid(x)
    path = Path(path)
    H, W, C = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, H, W, C))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    return path


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ImageFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, H, W, C = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ImageFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ImageFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * H * W * C
    if len(data) != expected:
        raise ImageFormatError(f"{path}: expected {expected} bytes for {H}x{W}x{C}, found {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(H, W, C)


def write_pixmap(path, x) -> Path:
    x = as_grid(x)
    H, W, C = x.shape
    if C not in (1, 3):
        raise ImageFormatError("pixmaps need 1 or 3 channels")
    path = Path(path)
    header = f"{'P5' if C == 1 else 'P6'}\n{W} {H}\n255\n".encode("ascii")
    path.write_bytes(header + to_bytes(x).tobytes())
    return path


def read_pixmap(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated pixmap header")
        tokens.append(data[start:pos])
    magic, W, H, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit P5/P6 pixmaps are supported")
    C = 3 if magic == b"P6" else 1
    body = data[pos + 1:]
    if len(body) != H * W * C:
        raise ImageFormatError(f"{path}: expected {H * W * C} pixel bytes, found {len(body)}")
    return from_bytes(np.frombuffer(body, dtype=np.uint8).reshape(H, W, C))


def write_image(path, x) -> Path:
    suffix = Path(path).suffix.lower()
    if suffix in (".ppm", ".pgm"):
        return write_pixmap(path, x)
    if suffix in (".drir", ".raw"):
        return write_raw(path, x)
    raise ImageFormatError(f"unknown image extension {suffix!r}")


def read_image(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix in (".ppm", ".pgm"):
        return read_pixmap(path)
    if suffix in (".drir", ".raw"):
        return read_raw(path)
    raise ImageFormatError(f"unknown image extension {suffix!r}")
