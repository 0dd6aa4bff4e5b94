"""RGT1 tensor blobs and the named-entry container built on them.

Tensor blob::

    b"RGT1" | u32 rank | rank x u32 extents | u8 dtype (0=f32, 1=f64, 2=u8) | payload

Container file::

    UTF-8 header lines (key=value), terminated by an empty line
    repeated: u32 name length | UTF-8 name | tensor blob

All integers are little-endian; payloads are row-major little-endian.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"RGT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.uint8): 2}


class FormatError(ValueError):
    """A file does not follow the RGT1 layout."""


def write_tensor(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"dtype {arr.dtype} is not storable (f32, f64, u8 only)")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(bytes([code]))
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def read_tensor(fh: BinaryIO) -> np.ndarray:
    if _read_exact(fh, 4, "magic") != MAGIC:
        raise FormatError("bad magic, expected RGT1")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
    if rank > 16:
        raise FormatError(f"implausible rank {rank}")
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "extents"))
    code = _read_exact(fh, 1, "dtype")[0]
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    count = int(np.prod(shape)) if rank else 1
    payload = _read_exact(fh, count * dt.itemsize, "payload")
    return np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def tensor_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def save_container(path, header: dict, entries: dict) -> None:
    """Write header key/values and named arrays atomically."""
    buf = io.BytesIO()
    for k, v in header.items():
        line = f"{k}={v}"
        if "\n" in line or "=" in str(k):
            raise FormatError(f"header entry {k!r} cannot be encoded")
        buf.write(line.encode("utf-8") + b"\n")
    buf.write(b"\n")
    for name, arr in entries.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        write_tensor(buf, arr)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    fh = io.BytesIO(data)
    header: dict[str, str] = {}
    while True:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise FormatError("truncated header")
        line = line[:-1]
        if not line:
            break
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("header is not UTF-8") from exc
        if "=" not in text:
            raise FormatError(f"malformed header line {text!r}")
        k, v = text.split("=", 1)
        header[k] = v
    entries: dict[str, np.ndarray] = {}
    while fh.tell() < len(data):
        (ln,) = struct.unpack("<I", _read_exact(fh, 4, "entry name length"))
        name = _read_exact(fh, ln, "entry name").decode("utf-8")
        entries[name] = read_tensor(fh)
    return header, entries
