"""Offline document-encoding cache and the binary checkpoint codec.

Cache file layout (all little-endian)::

    header   magic "DCBC" | version u16 | d u32 | Ld u32 | model_hash u64 | count u64
    index    count x (key_len u32 | doc_id utf-8 | offset u64), sorted by doc_id bytes
    payload  count x (Ld*d float32 row-major | true_length u32)

Offsets are relative to the start of the payload and strictly increasing.
"""

from __future__ import annotations

import bisect
import json
import struct
import threading
from pathlib import Path
from typing import Any, Iterator, NamedTuple

import numpy as np

from .encoder import DOCUMENT, EncodingMatrix
from .errors import CacheMissError, ConsistencyError, FormatError, InvalidInputError

MAGIC = b"DCBC"
VERSION = 1
_HEADER = struct.Struct("<4sHIIQQ")
_F32 = np.dtype("<f4")


class CacheKey(NamedTuple):
    doc_id: str
    model_hash: int

    def sort_key(self) -> tuple[int, bytes]:
        return (self.model_hash, self.doc_id.encode("utf-8"))


class EncodingCache:
    """Document encodings for a single model hash.

    Entries live as raw little-endian bytes, both in memory and on disk, so a
    persisted-then-loaded cache hands back exactly the bytes that were put.
    Reads take no lock; puts are serialised.
    """

    def __init__(self, d: int, max_len: int, model_hash: int):
        self.d = int(d)
        self.max_len = int(max_len)
        self.model_hash = int(model_hash)
        self._entries: dict[str, tuple[bytes, int]] = {}
        # Loaded entries: sorted ids with parallel offsets into one payload buffer.
        self._sorted_ids: list[bytes] = []
        self._offsets: list[int] = []
        self._payload: bytes = b""
        self._write_lock = threading.Lock()

    @property
    def entry_bytes(self) -> int:
        return self.max_len * self.d * 4

    def __len__(self) -> int:
        return len(self._entries) + len(self._sorted_ids)

    def __contains__(self, key: CacheKey) -> bool:
        return key.model_hash == self.model_hash and self._lookup(key.doc_id) is not None

    def keys(self) -> list[CacheKey]:
        ids = [i.decode("utf-8") for i in self._sorted_ids] + list(self._entries)
        return sorted((CacheKey(i, self.model_hash) for i in ids), key=CacheKey.sort_key)

    def _lookup(self, doc_id: str) -> tuple[bytes, int] | None:
        hit = self._entries.get(doc_id)
        if hit is not None:
            return hit
        raw = doc_id.encode("utf-8")
        i = bisect.bisect_left(self._sorted_ids, raw)
        if i < len(self._sorted_ids) and self._sorted_ids[i] == raw:
            off = self._offsets[i]
            blob = self._payload[off: off + self.entry_bytes]
            (true_len,) = struct.unpack_from("<I", self._payload, off + self.entry_bytes)
            return blob, true_len
        return None

    def put(self, key: CacheKey, enc: EncodingMatrix) -> None:
        if enc.role != DOCUMENT:
            raise InvalidInputError(f"only document encodings are cached, got {enc.role}")
        if key.model_hash != self.model_hash or enc.model_hash != self.model_hash:
            raise InvalidInputError(
                f"model hash mismatch: cache {self.model_hash:016x}, key {key.model_hash:016x}, "
                f"encoding {enc.model_hash:016x}")
        if enc.values.shape != (self.max_len, self.d):
            raise InvalidInputError(f"encoding shape {enc.values.shape} != cache shape {(self.max_len, self.d)}")
        blob = np.ascontiguousarray(enc.values, dtype=_F32).tobytes()
        with self._write_lock:
            existing = self._lookup(key.doc_id)
            if existing is not None:
                if existing != (blob, enc.true_length):
                    raise ConsistencyError(f"conflicting re-put for doc {key.doc_id!r}")
                return
            self._entries[key.doc_id] = (blob, int(enc.true_length))

    def get(self, key: CacheKey) -> EncodingMatrix:
        hit = self._lookup(key.doc_id) if key.model_hash == self.model_hash else None
        if hit is None:
            raise CacheMissError([key])
        blob, true_len = hit
        values = np.frombuffer(blob, dtype=_F32).reshape(self.max_len, self.d).astype(np.float32)
        return EncodingMatrix(values=values, role=DOCUMENT, model_hash=self.model_hash, true_length=true_len)

    def missing(self, doc_ids, model_hash: int) -> list[str]:
        return [i for i in doc_ids if CacheKey(i, model_hash) not in self]

    def _iter_sorted(self) -> Iterator[tuple[bytes, bytes, int]]:
        for key in self.keys():
            blob, true_len = self._lookup(key.doc_id)
            yield key.doc_id.encode("utf-8"), blob, true_len

    def to_bytes(self) -> bytes:
        items = list(self._iter_sorted())
        header = _HEADER.pack(MAGIC, VERSION, self.d, self.max_len, self.model_hash, len(items))
        index = bytearray()
        payload = bytearray()
        stride = self.entry_bytes + 4
        for i, (raw_id, blob, true_len) in enumerate(items):
            index += struct.pack("<I", len(raw_id)) + raw_id + struct.pack("<Q", i * stride)
            payload += blob + struct.pack("<I", true_len)
        return header + bytes(index) + bytes(payload)

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EncodingCache":
        if len(buf) < _HEADER.size:
            raise FormatError("truncated header", offset=len(buf))
        magic, version, d, max_len, model_hash, count = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        if version != VERSION:
            raise FormatError(f"unsupported version {version}", offset=4)
        if d == 0 or max_len == 0:
            raise FormatError("zero dimension in header", offset=6)
        cache = cls(d, max_len, model_hash)
        pos = _HEADER.size
        ids: list[bytes] = []
        offsets: list[int] = []
        for _ in range(count):
            if pos + 4 > len(buf):
                raise FormatError("truncated index", offset=pos)
            (n,) = struct.unpack_from("<I", buf, pos)
            if pos + 4 + n + 8 > len(buf):
                raise FormatError("truncated index entry", offset=pos)
            raw_id = bytes(buf[pos + 4: pos + 4 + n])
            (off,) = struct.unpack_from("<Q", buf, pos + 4 + n)
            if ids and raw_id <= ids[-1]:
                raise FormatError("index keys not strictly sorted", offset=pos)
            if offsets and off <= offsets[-1]:
                raise FormatError("index offsets not strictly increasing", offset=pos + 4 + n)
            ids.append(raw_id)
            offsets.append(off)
            pos += 4 + n + 8
        stride = cache.entry_bytes + 4
        expected = count * stride
        payload = bytes(buf[pos:])
        if len(payload) != expected:
            raise FormatError(f"payload is {len(payload)} bytes, expected {expected}", offset=pos + min(len(payload), expected))
        for i, off in enumerate(offsets):
            if off + stride > expected:
                raise FormatError(f"entry {i} offset {off} out of payload range", offset=pos)
        cache._sorted_ids = ids
        cache._offsets = offsets
        cache._payload = payload
        return cache

    @classmethod
    def load(cls, path: str | Path) -> "EncodingCache":
        return cls.from_bytes(Path(path).read_bytes())


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"DCBK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHQ")


def write_checkpoint(path: str | Path, arrays: list[tuple[str, np.ndarray]], meta: dict[str, Any]) -> None:
    """Write named float32 arrays plus JSON metadata to one binary file.

    Layout: magic "DCBK" | version u16 | meta_len u64 | meta JSON | raw
    little-endian float32 arrays in the order listed in ``meta['tensors']``.
    """
    meta = dict(meta)
    meta["tensors"] = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype=_F32).tobytes() for _, a in arrays)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, len(blob)) + blob + body)
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    buf = Path(path).read_bytes()
    if len(buf) < _CKPT_HEADER.size:
        raise FormatError("truncated checkpoint header", offset=len(buf))
    magic, version, meta_len = _CKPT_HEADER.unpack_from(buf, 0)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    start = _CKPT_HEADER.size
    if start + meta_len > len(buf):
        raise FormatError("truncated checkpoint metadata", offset=len(buf))
    meta = json.loads(buf[start:start + meta_len].decode("utf-8"))
    pos = start + meta_len
    arrays: dict[str, np.ndarray] = {}
    for entry in meta["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64)) * 4
        if pos + n > len(buf):
            raise FormatError(f"truncated tensor {entry['name']}", offset=pos)
        arrays[entry["name"]] = np.frombuffer(buf, dtype=_F32, count=n // 4, offset=pos).reshape(entry["shape"]).astype(np.float32)
        pos += n
    if pos != len(buf):
        raise FormatError("trailing bytes after last tensor", offset=pos)
    return arrays, meta
