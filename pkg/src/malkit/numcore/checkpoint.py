"""Binary checkpoint codec.

Layout (all little-endian):
  magic   8 bytes  b"MALCKPT1"
  count   u64      number of parameters
  then per parameter:
    u32 name length, utf-8 name
    u32 group length, utf-8 group tag
    u32 rank, u64 * rank dims
    f64 * prod(dims)   raw values, row-major
  then the Adam state, one record per parameter in the same order/layout:
    u32 name length, name; u32 group length, group; u32 rank, dims
    f64 * n  first moment
    f64 * n  second moment
    u64      step count
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .params import ParamStore

MAGIC = b"MALCKPT1"


def _pack_header(name: str, group: str, shape: tuple[int, ...]) -> bytes:
    nb = name.encode("utf-8")
    gb = group.encode("utf-8")
    out = struct.pack("<I", len(nb)) + nb
    out += struct.pack("<I", len(gb)) + gb
    out += struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}Q", *shape)
    return out


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ParseError(f"{self.path}: truncated checkpoint at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def header(self) -> tuple[str, str, tuple[int, ...]]:
        name = self.text()
        group = self.text()
        rank = self.u32()
        shape = struct.unpack(f"<{rank}Q", self.take(8 * rank)) if rank else ()
        return name, group, tuple(int(d) for d in shape)

    def f64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def save_checkpoint(store: ParamStore, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<Q", len(store))]
    for p in store:
        parts.append(_pack_header(p.name, p.group, p.tensor.data.shape))
        parts.append(np.ascontiguousarray(p.tensor.data, dtype="<f8").tobytes())
    for p in store:
        parts.append(_pack_header(p.name, p.group, p.tensor.data.shape))
        parts.append(np.ascontiguousarray(p.m, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(p.v, dtype="<f8").tobytes())
        parts.append(struct.pack("<Q", p.step))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> ParamStore:
    blob = Path(path).read_bytes()
    r = _Reader(blob, str(path))
    if r.take(len(MAGIC)) != MAGIC:
        raise ParseError(f"{path}: bad checkpoint magic")
    count = r.u64()
    store = ParamStore()
    for _ in range(count):
        name, group, shape = r.header()
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = r.f64(n).reshape(shape)
        store.add(name, group, data)
    for _ in range(count):
        name, group, shape = r.header()
        p = store.param(name)
        if p.group != group or p.tensor.data.shape != shape:
            raise ParseError(f"{path}: Adam record for {name!r} does not match its parameter")
        n = p.tensor.size
        p.m = r.f64(n).reshape(shape)
        p.v = r.f64(n).reshape(shape)
        p.step = r.u64()
    if r.pos != len(blob):
        raise ParseError(f"{path}: {len(blob) - r.pos} trailing bytes after checkpoint payload")
    return store
