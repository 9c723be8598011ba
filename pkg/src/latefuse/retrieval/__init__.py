"""Index fused document vectors and answer queries by cosine ranking.

Flat search is the exactness oracle; HNSW provides approximate search at
scale. The hot kernels are compiled (Cython) when available, with a NumPy
fallback; see latefuse.retrieval.backend.BACKEND for the active one.
"""

from .backend import BACKEND, get_backend
from .flat import FlatIndex, RankedList, build_flat, normalize_rows, search_flat
from .hnsw import HnswIndex, build_hnsw, search_hnsw
from .io import IndexFormatError, read_index, write_index


def search(index, query_vec, k: int, ef_search: int = 100) -> RankedList:
    """Dispatch on index kind."""
    if isinstance(index, FlatIndex):
        return search_flat(index, query_vec, k)
    return search_hnsw(index, query_vec, k, ef_search=max(ef_search, k))


__all__ = [
    "BACKEND", "get_backend",
    "FlatIndex", "HnswIndex", "RankedList",
    "build_flat", "build_hnsw", "normalize_rows",
    "search", "search_flat", "search_hnsw",
    "read_index", "write_index", "IndexFormatError",
]
