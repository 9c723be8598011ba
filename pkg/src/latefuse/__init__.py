"""Document-level multi-modal retrieval engine.

Curates mixed text+image corpora into a unified JSONL format, learns a
late-fusion document representation over precomputed embeddings with a
symmetric batch-wise BCE or InfoNCE objective, and ranks documents against
queries by cosine similarity (exact flat search or HNSW).
"""

__version__ = "0.1.0"
