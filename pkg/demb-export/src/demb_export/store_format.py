"""Writer (and verification reader) for "DEMB" embedding store files.

Layout, all little-endian:
    magic   4 bytes  b"DEMB"
    version u8       1
    kind    u8       0 = text, 1 = image, 2 = query
    count   u32
    dim     u32
    normalized u8    1 iff every row is unit length (checked to 1e-3)
    ids     count x (u16 length + UTF-8 bytes)
    matrix  count x dim float32

This module is deliberately self-contained: the engine that consumes these
files has its own reader, and the byte format is the only contract between
the two.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DEMB"
VERSION = 1
KINDS = {"text": 0, "image": 1, "query": 2}
KIND_NAMES = {v: k for k, v in KINDS.items()}
NORM_TOL = 1e-3


class StoreWriteError(ValueError):
    pass


@dataclass
class StorePayload:
    kind: str
    normalized: bool
    ids: list[str]
    matrix: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StoreWriteError(f"unknown kind: {self.kind!r}")
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise StoreWriteError("matrix must be 2-D")
        if len(self.ids) != self.matrix.shape[0]:
            raise StoreWriteError("ids/matrix row count mismatch")
        if len(set(self.ids)) != len(self.ids):
            raise StoreWriteError("duplicate ids")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def write_demb(payload: StorePayload, path) -> None:
    if payload.normalized and len(payload.ids):
        norms = np.linalg.norm(payload.matrix.astype(np.float64), axis=1)
        bad = np.abs(norms - 1.0) > NORM_TOL
        if bad.any():
            raise StoreWriteError(
                f"normalized store has non-unit row {int(np.argmax(bad))} "
                f"(norm {norms[np.argmax(bad)]:.6f})")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BB", VERSION, KINDS[payload.kind]))
        f.write(struct.pack("<II", len(payload.ids), payload.dim))
        f.write(struct.pack("<B", 1 if payload.normalized else 0))
        for id_ in payload.ids:
            raw = id_.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise StoreWriteError(f"id too long: {id_[:40]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(payload.matrix.astype("<f4", copy=False).tobytes())


def read_demb(path) -> StorePayload:
    """Verification reader used by this package's own tests."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise StoreWriteError(f"bad magic: {data[:4]!r}")
    version, kind = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise StoreWriteError(f"unsupported version: {version}")
    count, dim = struct.unpack_from("<II", data, 6)
    normalized = bool(struct.unpack_from("<B", data, 14)[0])
    off = 15
    ids = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        ids.append(data[off:off + n].decode("utf-8"))
        off += n
    need = count * dim * 4
    if len(data) - off < need:
        raise StoreWriteError("truncated payload")
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim,
                           offset=off).reshape(count, dim).copy()
    return StorePayload(kind=KIND_NAMES[kind], normalized=normalized,
                        ids=ids, matrix=matrix)
