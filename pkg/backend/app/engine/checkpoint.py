"""Binary tensor container.

Layout (all integers little-endian)::

    b"UVEW" | u32 version=1 | u32 tensor_count | u32 meta_len | meta (UTF-8 JSON)
    per tensor: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..core.errors import CheckpointError


MAGIC = b"UVEW"
VERSION = 1


def encoded_size(tensors: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> int:
    size = 4 + 4 + 4 + 4 + len(_encode_meta(meta))
    for name, arr in tensors.items():
        size += 2 + len(name.encode("utf-8")) + 1 + 4 * arr.ndim + 4 * arr.size
    return size


def _encode_meta(meta: Mapping[str, Any]) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_tensors(path: str | Path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> None:
    meta_bytes = _encode_meta(meta)
    chunks = [MAGIC, struct.pack("<III", VERSION, len(tensors), len(meta_bytes)), meta_bytes]
    for name, arr in tensors.items():
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, path: Path, blob: bytes) -> None:
        self.path = path
        self.blob = blob
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.blob):
            raise CheckpointError(str(self.path), f"truncated while reading {what}", offset=self.offset)
        chunk = self.blob[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    source = Path(path)
    if not source.exists():
        raise CheckpointError(str(source), "file does not exist")
    reader = _Reader(source, source.read_bytes())

    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError(str(source), "bad magic, not a UVEW checkpoint", offset=0)
    version, count, meta_len = reader.unpack("<III", "header")
    if version != VERSION:
        raise CheckpointError(str(source), f"unsupported version {version}", offset=4)
    try:
        meta = json.loads(reader.take(meta_len, "config blob").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(str(source), f"corrupt config blob: {exc}", offset=16) from exc

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        name = reader.take(name_len, "tensor name").decode("utf-8")
        (rank,) = reader.unpack("<B", f"rank of {name}")
        dims = reader.unpack(f"<{rank}I", f"dims of {name}")
        numel = int(np.prod(dims, dtype=np.int64))
        payload = reader.take(4 * numel, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)

    if reader.offset != len(reader.blob):
        raise CheckpointError(str(source), "trailing bytes after last tensor", offset=reader.offset)
    return tensors, meta
