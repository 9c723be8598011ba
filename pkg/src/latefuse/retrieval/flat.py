"""Exact cosine ranking over the full collection (the correctness oracle)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..store import EmbeddingStore


@dataclass
class RankedList:
    query_id: str
    hits: list[tuple[str, float]]  # (doc_id, score), scores non-increasing
    k: int


def _id_rank(ids: list[str]) -> np.ndarray:
    """rank[i] = position of ids[i] in ascending lexicographic order."""
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    for pos, i in enumerate(order):
        rank[i] = pos
    return rank


@dataclass
class FlatIndex:
    dim: int
    doc_ids: list[str]
    matrix: np.ndarray  # (n, dim) float32, unit rows
    id_rank: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.id_rank is None:
            self.id_rank = _id_rank(self.doc_ids)

    def __len__(self) -> int:
        return len(self.doc_ids)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Unit-normalize rows (64-bit accumulation), error on any zero row."""
    m64 = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m64, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"zero vector at row {int(np.argmin(norms))}")
    return (m64 / norms[:, None]).astype(np.float32)


def build_flat(doc_vecs: EmbeddingStore) -> FlatIndex:
    if len(doc_vecs) == 0:
        return FlatIndex(dim=doc_vecs.dim, doc_ids=[],
                         matrix=np.zeros((0, doc_vecs.dim), dtype=np.float32))
    return FlatIndex(dim=doc_vecs.dim, doc_ids=list(doc_vecs.ids),
                     matrix=normalize_rows(doc_vecs.matrix))


def search_flat(index: FlatIndex, query_vec, k: int) -> RankedList | list:
    """Exact top-k by cosine; ties broken by ascending doc_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} != index dim {index.dim}")
    if len(index) == 0:
        return RankedList(query_id="", hits=[], k=k)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("zero query vector")
    scores = index.matrix.astype(np.float64) @ (q / norm)
    order = np.lexsort((index.id_rank, -scores))[:k]
    hits = [(index.doc_ids[i], float(scores[i])) for i in order]
    return RankedList(query_id="", hits=hits, k=k)
