""""DIDX" index files: magic, version, kind byte, then a kind-specific
little-endian payload. Serialization round-trips to identical search results
(and, for HNSW, identical graph bytes)."""

from __future__ import annotations

import json
import struct

import numpy as np

from .flat import FlatIndex
from .hnsw import HnswIndex

MAGIC = b"DIDX"
VERSION = 1
KIND_FLAT = 0
KIND_HNSW = 1


class IndexFormatError(ValueError):
    pass


def _write_ids(f, ids: list[str]) -> None:
    for id_ in ids:
        raw = id_.encode("utf-8")
        f.write(struct.pack("<H", len(raw)))
        f.write(raw)


def _read_ids(data: bytes, off: int, count: int) -> tuple[list[str], int]:
    ids = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        ids.append(data[off:off + n].decode("utf-8"))
        off += n
    return ids, off


def write_index(index: FlatIndex | HnswIndex, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        if isinstance(index, FlatIndex):
            f.write(struct.pack("<BB", VERSION, KIND_FLAT))
            f.write(struct.pack("<II", len(index), index.dim))
            _write_ids(f, index.doc_ids)
            f.write(index.matrix.astype("<f4", copy=False).tobytes())
        elif isinstance(index, HnswIndex):
            f.write(struct.pack("<BB", VERSION, KIND_HNSW))
            header = {
                "count": len(index), "dim": index.dim,
                "m_links": index.m_links, "ef_construction": index.ef_construction,
                "seed": index.seed, "max_level": index.max_level,
                "entry": index.entry,
            }
            raw = json.dumps(header, sort_keys=True).encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            _write_ids(f, index.doc_ids)
            f.write(index.vectors.astype("<f4", copy=False).tobytes())
            f.write(index.levels.astype("<i4", copy=False).tobytes())
            for layer in range(index.max_level + 1):
                f.write(index.deg[layer].astype("<i4", copy=False).tobytes())
                f.write(index.adj[layer].astype("<i4", copy=False).tobytes())
        else:
            raise TypeError(f"not an index: {type(index).__name__}")


def read_index(path) -> FlatIndex | HnswIndex:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise IndexFormatError(f"bad magic: {data[:4]!r}")
    version, kind = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise IndexFormatError(f"unsupported version: {version}")
    off = 6
    if kind == KIND_FLAT:
        count, dim = struct.unpack_from("<II", data, off)
        off += 8
        ids, off = _read_ids(data, off, count)
        need = count * dim * 4
        if len(data) - off < need:
            raise IndexFormatError("truncated flat payload")
        matrix = np.frombuffer(data, dtype="<f4", count=count * dim,
                               offset=off).reshape(count, dim).copy()
        return FlatIndex(dim=dim, doc_ids=ids, matrix=matrix)
    if kind == KIND_HNSW:
        (hlen,) = struct.unpack_from("<I", data, off)
        off += 4
        h = json.loads(data[off:off + hlen].decode("utf-8"))
        off += hlen
        count, dim = h["count"], h["dim"]
        ids, off = _read_ids(data, off, count)

        def take(dtype, n, shape):
            nonlocal off
            arr = np.frombuffer(data, dtype=dtype, count=n, offset=off)
            off += arr.nbytes
            return arr.reshape(shape).copy()

        vectors = take("<f4", count * dim, (count, dim))
        levels = take("<i4", count, (count,))
        adj, deg = [], []
        for layer in range(h["max_level"] + 1):
            cap = 2 * h["m_links"] if layer == 0 else h["m_links"]
            deg.append(take("<i4", count, (count,)))
            adj.append(take("<i4", count * cap, (count, cap)))
        return HnswIndex(dim=dim, m_links=h["m_links"],
                         ef_construction=h["ef_construction"], seed=h["seed"],
                         doc_ids=ids, vectors=vectors, levels=levels,
                         max_level=h["max_level"], entry=h["entry"],
                         adj=adj, deg=deg)
    raise IndexFormatError(f"unknown kind byte: {kind}")
