"""Binary array container with a JSON sidecar, plus an IDX reader.

Layout (all integers little-endian)::

    b"SSCL" | version:u16 | n_arrays:u16
    repeated n_arrays times:
        name_len:u16 | name:utf-8 | ndim:u16 | dims:u64 * ndim | data:f64 * prod(dims)

The sidecar ``<path>.json`` holds free-form metadata (generator config, seed).
"""
from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError

MAGIC = b"SSCL"
VERSION = 1


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_arrays(path, arrays: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    parts = [MAGIC, struct.pack("<HH", VERSION, len(arrays))]
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<H", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    path.write_bytes(b"".join(parts))
    sidecar_path(path).write_text(json.dumps(meta or {}, indent=2, sort_keys=True) + "\n")
    return path


def load_arrays(path) -> tuple[dict, dict]:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise ContractError(f"{path}: not an SSCL container")
    version, count = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise ContractError(f"{path}: unsupported container version {version}")
    off = 8
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<H", buf, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
    if off != len(buf):
        raise ContractError(f"{path}: {len(buf) - off} trailing bytes")
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return arrays, meta


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed), e.g. the MNIST distribution files."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        buf = fh.read()
    zero, dtype_code, ndim = struct.unpack_from(">HBB", buf, 0)
    if zero != 0 or dtype_code not in _IDX_TYPES:
        raise ContractError(f"{path}: bad IDX header")
    shape = struct.unpack_from(f">{ndim}I", buf, 4)
    dtype = np.dtype(_IDX_TYPES[dtype_code])
    data = np.frombuffer(buf, dtype=dtype, offset=4 + 4 * ndim, count=int(np.prod(shape)))
    return data.reshape(shape)
