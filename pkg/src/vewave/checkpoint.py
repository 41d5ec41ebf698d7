"""Self-describing binary checkpoint for named f64 parameter arrays.

Layout (all integers little-endian unsigned):

    bytes 0..4   magic b"VWCK"
    u32          format version (currently 1)
    u32          parameter count
    repeated per parameter, in save order:
        u32      name length in bytes
        bytes    utf-8 name
        u32      rank
        u32*rank dims
        f64*prod little-endian array data, C order

Round-trips are bit-exact: values are stored as raw IEEE-754 doubles.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"VWCK"
VERSION = 1


def save_checkpoint(path, params) -> None:
    """Write Parameters (anything with .name and .data) to `path`."""
    params = list(params)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise DataError(f"duplicate parameter names in checkpoint: {dup}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(params))
    for p in params:
        name = p.name.encode("utf-8")
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        out += struct.pack("<I", len(name))
        out += name
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> dict:
    """Read a checkpoint back as an ordered name -> ndarray dict."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic {blob[:4]!r})")
    off = 4
    version, count = struct.unpack_from("<II", blob, off)
    off += 8
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    state = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(dims)
        off += 8 * n
        state[name] = arr.astype(np.float64)  # own, writable copy
    if off != len(blob):
        raise DataError(f"{path}: {len(blob) - off} trailing bytes after last parameter")
    return state


def load_into(params, state: dict) -> None:
    """Assign checkpoint arrays to live Parameters, matching by name.

    The parameter set and the checkpoint must agree exactly: missing or
    unexpected names and shape mismatches are data errors.
    """
    params = list(params)
    have = {p.name for p in params}
    missing = sorted(n for n in have if n not in state)
    extra = sorted(n for n in state if n not in have)
    if missing or extra:
        raise DataError(
            f"checkpoint does not match model: missing={missing}, unexpected={extra}"
        )
    for p in params:
        arr = state[p.name]
        if arr.shape != p.data.shape:
            raise DataError(
                f"shape mismatch for {p.name!r}: checkpoint {arr.shape}, model {p.data.shape}"
            )
        p.data = arr.copy()
        p.grad = None
