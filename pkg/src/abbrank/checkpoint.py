"""Binary checkpoint container: named tensors plus a JSON metadata blob.

Layout (little-endian): magic ``ABBC``, format version, metadata length
and bytes, tensor count, then per tensor a length-prefixed name, dtype
code, rank, dims, and raw data.  Round-trips are bit-exact, which the
freeze contracts elsewhere rely on.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"ABBC"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {"<f8": 0, "<f4": 1, "<i8": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def _canonical_dtype(arr: np.ndarray) -> str:
    kind = arr.dtype.kind + str(arr.dtype.itemsize)
    mapping = {"f8": "<f8", "f4": "<f4", "i8": "<i8"}
    if kind not in mapping:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")
    return mapping[kind]


def _serialize_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype = _canonical_dtype(arr)
        name_bytes = name.encode("utf-8")
        out.extend(struct.pack("<I", len(name_bytes)))
        out.extend(name_bytes)
        out.extend(struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim))
        out.extend(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.extend(arr.astype(dtype, copy=False).tobytes())
    return bytes(out)


def tensors_hash(tensors: dict[str, np.ndarray]) -> str:
    """Content hash over the canonical serialization (metadata excluded)."""
    return hashlib.sha256(_serialize_tensors(tensors)).hexdigest()


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray],
                 metadata: dict | None = None) -> None:
    meta_bytes = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob.extend(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta_bytes)))
    blob.extend(meta_bytes)
    blob.extend(struct.pack("<I", len(tensors)))
    blob.extend(_serialize_tensors(tensors))
    Path(path).write_bytes(bytes(blob))


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sII")
    if len(raw) < header:
        raise CheckpointTruncatedError(f"{path}: shorter than header")
    magic, version, meta_len = struct.unpack_from("<4sII", raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    offset = header
    if offset + meta_len > len(raw):
        raise CheckpointTruncatedError(f"{path}: metadata cut short")
    metadata = json.loads(raw[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    if offset + 4 > len(raw):
        raise CheckpointTruncatedError(f"{path}: tensor count missing")
    (count,) = struct.unpack_from("<I", raw, offset)
    offset += 4

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 4 > len(raw):
            raise CheckpointTruncatedError(f"{path}: tensor name truncated")
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        if offset + 2 > len(raw):
            raise CheckpointTruncatedError(f"{path}: tensor header truncated")
        dtype_code, ndim = struct.unpack_from("<BB", raw, offset)
        offset += 2
        if dtype_code not in _CODE_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {dtype_code}")
        shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
        offset += 8 * ndim
        dtype = np.dtype(_CODE_DTYPES[dtype_code])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + n_bytes > len(raw):
            raise CheckpointTruncatedError(f"{path}: tensor data truncated")
        arr = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape).copy()
        offset += n_bytes
        tensors[name] = arr
    return tensors, metadata
