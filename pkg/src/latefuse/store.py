"""Embedding stores: id-addressed float32 vectors with a bit-exact binary format.

On-disk layout ("DEMB" format, little-endian):

    magic   4 bytes  b"DEMB"
    version 1 byte   0x01
    kind    1 byte   0=text 1=image 2=query
    count   u32
    dim     u32
    normalized 1 byte
    ids     count x (u16 length + UTF-8 bytes)
    data    count x dim float32, row-major, in id-listing order

Image stores use ids of the form "docid#k" so that per-document groups are
recoverable without a side table; query stores use "docid@qN" when a document
carries several queries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"DEMB"
VERSION = 1

KINDS = ("text", "image", "query")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

NORM_TOL = 1e-3


class StoreFormatError(ValueError):
    """Raised when a store file violates the DEMB layout or its invariants."""


@dataclass
class EmbeddingStore:
    """Immutable-after-load mapping id -> vector, all of one fixed dimension."""

    dim: int
    kind: str
    normalized: bool
    ids: list[str] = field(default_factory=list)
    matrix: np.ndarray | None = None  # (count, dim) float32

    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown store kind: {self.kind!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.matrix is None:
            self.matrix = np.zeros((0, self.dim), dtype=np.float32)
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.dim:
            raise ValueError(
                f"matrix shape {self.matrix.shape} inconsistent with dim={self.dim}"
            )
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError("ids and matrix row count differ")
        self._index = {}
        for i, id_ in enumerate(self.ids):
            if id_ in self._index:
                raise ValueError(f"duplicate id: {id_!r}")
            self._index[id_] = i

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def vector(self, id_: str) -> np.ndarray:
        try:
            return self.matrix[self._index[id_]]
        except KeyError:
            raise KeyError(f"id not in store: {id_!r}") from None

    def row(self, id_: str) -> int:
        return self._index[id_]

    def validate_norms(self) -> None:
        if not self.normalized or len(self) == 0:
            return
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        bad = np.where(np.abs(norms - 1.0) > NORM_TOL)[0]
        if bad.size:
            i = int(bad[0])
            raise StoreFormatError(
                f"norm violation: id {self.ids[i]!r} has L2 norm {norms[i]:.6g}"
            )


@dataclass
class ImageGroup:
    """Ordered image-embedding ids belonging to one document."""

    doc_id: str
    member_ids: list[str]

    def __post_init__(self):
        if not self.member_ids:
            raise ValueError(f"empty image group for doc {self.doc_id!r}")


def write_store(store: EmbeddingStore, path) -> None:
    store.validate_norms()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BBIIB", VERSION, _KIND_CODE[store.kind],
                            len(store), store.dim, int(store.normalized)))
        for id_ in store.ids:
            raw = id_.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long: {id_[:32]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(store.matrix.astype("<f4", copy=False).tobytes())


def read_store(path) -> EmbeddingStore:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise StoreFormatError(f"bad magic: {data[:4]!r}")
    try:
        version, kind_code, count, dim, normalized = struct.unpack_from("<BBIIB", data, 4)
    except struct.error:
        raise StoreFormatError("truncated header") from None
    if version != VERSION:
        raise StoreFormatError(f"unsupported version: {version}")
    if kind_code >= len(KINDS):
        raise StoreFormatError(f"unknown kind code: {kind_code}")
    off = 4 + 11
    ids = []
    for _ in range(count):
        if off + 2 > len(data):
            raise StoreFormatError("truncated id table")
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + n > len(data):
            raise StoreFormatError("truncated id table")
        ids.append(data[off:off + n].decode("utf-8"))
        off += n
    need = count * dim * 4
    if len(data) - off < need:
        raise StoreFormatError(
            f"truncated payload: need {need} bytes, have {len(data) - off}"
        )
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off)
    matrix = matrix.reshape(count, dim).copy()
    store = EmbeddingStore(dim=dim, kind=KINDS[kind_code],
                           normalized=bool(normalized), ids=ids, matrix=matrix)
    store.validate_norms()
    return store


def read_text_store(path, kind: str, normalized: bool = False) -> EmbeddingStore:
    """Import adapter: one `id v1 v2 ... vd` line per vector (hand-built fixtures)."""
    ids, rows = [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise StoreFormatError(f"{path}:{lineno}: non-numeric value") from None
            ids.append(parts[0])
    if not rows:
        raise StoreFormatError(f"{path}: empty store file")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise StoreFormatError(f"{path}: inconsistent dimensions {sorted(dims)}")
    matrix = np.asarray(rows, dtype=np.float32)
    store = EmbeddingStore(dim=matrix.shape[1], kind=kind,
                           normalized=normalized, ids=ids, matrix=matrix)
    store.validate_norms()
    return store


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Unit-norm copy of v. 64-bit accumulation, output dtype preserved."""
    v = np.asarray(v)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (v / norm).astype(v.dtype)


def mean_pool_images(group: ImageGroup, store: EmbeddingStore) -> np.ndarray:
    """Elementwise mean of the group's image vectors (64-bit accumulation)."""
    if store.kind != "image":
        raise ValueError(f"expected an image store, got kind={store.kind!r}")
    rows = []
    for mid in group.member_ids:
        if mid not in store:
            raise KeyError(f"image id missing from store: {mid!r}")
        rows.append(store.vector(mid))
    acc = np.zeros(store.dim, dtype=np.float64)
    for r in rows:
        acc += r.astype(np.float64)
    return acc / len(rows)


def image_doc_id(member_id: str) -> str:
    """Document id for an image-store id of the form "docid#k"."""
    return member_id.rsplit("#", 1)[0]


def query_doc_id(query_id: str) -> str:
    """Document id for a query-store id of the form "docid@qN" (or a plain doc id)."""
    return query_id.rsplit("@", 1)[0]


def group_images(store: EmbeddingStore) -> dict[str, ImageGroup]:
    """Recover per-document image groups from "docid#k" ids, in store order."""
    groups: dict[str, list[str]] = {}
    for id_ in store.ids:
        groups.setdefault(image_doc_id(id_), []).append(id_)
    return {doc: ImageGroup(doc, members) for doc, members in groups.items()}
