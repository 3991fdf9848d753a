"""Binary tensor container used for checkpoints and contextual-embedding sidecars.

Layout (little-endian)::

    b"G2SQG" | version u32 | count u32 |
    count x { name_len u32 | name utf-8 | rank u32 | dims u32 x rank | float32 data } |
    crc32 u32   (over every preceding byte)
"""

from __future__ import annotations

import os
import struct
import zlib
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError

MAGIC = b"G2SQG"
FORMAT_VERSION = 1


def encode_container(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def decode_container(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < len(MAGIC) + 12 or blob[: len(MAGIC)] != MAGIC:
        raise IntegrityError("not a tensor container (bad magic bytes)")
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise IntegrityError("container checksum mismatch")
    pos = len(MAGIC)
    version, count = struct.unpack_from("<II", payload, pos)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version} (expected {FORMAT_VERSION})")
    pos += 8
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            name = payload[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", payload, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(payload, dtype="<f4", count=size, offset=pos).reshape(dims)
            pos += 4 * size
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise IntegrityError(f"truncated or corrupt container ({e})") from None
    if pos != len(payload):
        raise IntegrityError("trailing bytes in container")
    return out


def write_container(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    blob = encode_container(tensors)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return decode_container(fh.read())
