"""VWT1: a small self-describing binary array container.

Layout (all little-endian)::

    b"VWT1" | u16 version | u16 kind | u32 ndim | u64 dim * ndim |
    u8 dtype tag | payload (row-major) | u32 CRC32(payload)

An optional UTF-8 JSON metadata block may follow the dtype tag as
``u32 length | bytes`` when the version is 2 or higher; version 1 files
carry no metadata.
"""
from __future__ import annotations

import enum
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VWT1"
VERSION = 2


class PayloadKind(enum.IntEnum):
    TENSOR = 1
    FINGERPRINT = 2
    DICTIONARY = 3
    MODEL = 4
    RAW_CAPTURE = 5


class DType(enum.IntEnum):
    F64 = 1
    C128 = 2


_NUMPY = {DType.F64: np.dtype("<f8"), DType.C128: np.dtype("<c16")}


class ContainerError(ValueError):
    pass


class CorruptContainerError(ContainerError):
    pass


@dataclass
class Record:
    kind: PayloadKind
    array: np.ndarray
    meta: dict = field(default_factory=dict)


def encode(array, kind: PayloadKind, meta=None) -> bytes:
    arr = np.asarray(array)
    if np.iscomplexobj(arr):
        tag, arr = DType.C128, arr.astype("<c16")
    else:
        tag, arr = DType.F64, arr.astype("<f8")
    payload = np.ascontiguousarray(arr).tobytes(order="C")
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    head = MAGIC + struct.pack("<HHI", VERSION, int(kind), arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    head += struct.pack("<B", int(tag)) + struct.pack("<I", len(meta_bytes)) + meta_bytes
    return head + payload + struct.pack("<I", zlib.crc32(payload))


def decode(blob: bytes) -> Record:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ContainerError("not a VWT1 container")
    version, kind, ndim = struct.unpack_from("<HHI", blob, 4)
    if version not in (1, 2):
        raise ContainerError(f"unsupported VWT1 version {version}")
    off = 12
    try:
        dims = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        (tag,) = struct.unpack_from("<B", blob, off)
        off += 1
        meta = {}
        if version >= 2:
            (mlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            meta = json.loads(blob[off:off + mlen].decode())
            off += mlen
        dtype = _NUMPY[DType(tag)]
        kind = PayloadKind(kind)
    except (struct.error, ValueError, KeyError) as exc:
        raise ContainerError(f"malformed VWT1 header: {exc}") from None
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) != off + nbytes + 4:
        raise CorruptContainerError(
            f"payload length mismatch: header declares {nbytes} bytes, file holds {len(blob) - off - 4}")
    payload = blob[off:off + nbytes]
    (crc,) = struct.unpack_from("<I", blob, off + nbytes)
    if zlib.crc32(payload) != crc:
        raise CorruptContainerError("CRC32 mismatch")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return Record(kind=kind, array=arr, meta=meta)


def write(path, array, kind: PayloadKind, meta=None):
    path = Path(path)
    try:
        path.write_bytes(encode(array, kind, meta))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def read(path) -> Record:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return decode(blob)
    except ContainerError as exc:
        raise type(exc)(f"{path}: {exc}") from None
