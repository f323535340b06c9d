"""``DGT1`` binary tensor container plus manifest-directory helpers.

Layout (all little-endian)::

    b"DGT1" | u16 version=1 | u8 dtype (0=f32, 1=f64) | u8 rank
    | rank x u64 extents | row-major payload
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError

MAGIC = b"DGT1"
VERSION = 1
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        raise FormatError(f"DGT1 stores f32/f64 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("rank exceeds 255")
    head = MAGIC + struct.pack("<HBB", VERSION, _CODES[arr.dtype], arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("missing DGT1 magic")
    version, code, rank = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported DGT1 version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    off = 8 + 8 * rank
    if len(buf) < off:
        raise FormatError("truncated header")
    dims = struct.unpack_from(f"<{rank}Q", buf, 8)
    dt = _DTYPES[code]
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(buf) != off + n * dt.itemsize:
        raise FormatError(f"payload size {len(buf) - off} does not match dims {dims}")
    arr = np.frombuffer(buf, dtype=dt, count=n, offset=off).reshape(dims)
    return arr.astype(dt.newbyteorder("="), copy=True)


def save_tensor(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def save_labels(path, labels) -> None:
    """Write a raw little-endian u16 label table."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise FormatError("labels must fit in u16")
    Path(path).write_bytes(labels.astype("<u2").tobytes())


def load_labels(path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<u2").astype(np.int64)


def write_manifest(path, manifest: dict) -> None:
    """Deterministic JSON (sorted keys, fixed separators, trailing newline)."""
    text = json.dumps(manifest, sort_keys=True, indent=2, separators=(",", ": "))
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"bad manifest {path}: {e}") from None
