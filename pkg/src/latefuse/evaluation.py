"""MRR@10, NDCG@10 and HIT@{1,3,10} under the full-collection protocol.

Each query has exactly one relevant document. The relevant document's true
rank is computed exactly (search at k = pool size), so a missing rank always
means "not in the pool", never "beyond the search beam". Reports carry the
pool size and per-domain plus full-set rows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .retrieval import search
from .store import EmbeddingStore

TRUNCATION = 10
HIT_KS = (1, 3, 10)


class EvalError(ValueError):
    pass


@dataclass
class QRels:
    """query_id -> the single relevant doc_id."""

    pairs: dict[str, str]

    @classmethod
    def from_tsv(cls, path) -> "QRels":
        pairs: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise EvalError(f"{path}:{lineno}: expected 'query_id<TAB>doc_id'")
                qid, did = parts
                if qid in pairs:
                    raise EvalError(f"{path}:{lineno}: duplicate query id {qid!r}")
                pairs[qid] = did
        return cls(pairs)

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for qid, did in self.pairs.items():
                f.write(f"{qid}\t{did}\n")


def full_collection_pool(*corpora_doc_ids: list[str]) -> list[str]:
    """Union of all splits' doc ids; id collisions across splits are errors."""
    pool: list[str] = []
    seen: set[str] = set()
    for split in corpora_doc_ids:
        for did in split:
            if did in seen:
                raise EvalError(f"doc id {did!r} appears in more than one split")
            seen.add(did)
            pool.append(did)
    return pool


def _check_ranks(ranks) -> list:
    for r in ranks:
        if r is not None and r < 1:
            raise EvalError(f"rank must be >= 1, got {r}")
    return list(ranks)


def mrr_at_10(ranks: list[int | None]) -> float:
    """Mean of 1/rank for ranks <= 10, else 0."""
    ranks = _check_ranks(ranks)
    if not ranks:
        return 0.0
    return sum(1.0 / r for r in ranks if r is not None and r <= TRUNCATION) / len(ranks)


def ndcg_at_10(ranks: list[int | None]) -> float:
    """Binary relevance, single positive: DCG = 1/log2(rank+1) within the cut."""
    import math

    ranks = _check_ranks(ranks)
    if not ranks:
        return 0.0
    total = sum(1.0 / math.log2(r + 1) for r in ranks
                if r is not None and r <= TRUNCATION)
    return total / len(ranks)


def hit_at_k(ranks: list[int | None], k: int) -> float:
    """Fraction of queries whose positive sits within the top k (inclusive)."""
    ranks = _check_ranks(ranks)
    if not ranks:
        return 0.0
    return sum(1 for r in ranks if r is not None and r <= k) / len(ranks)


@dataclass
class MetricRow:
    queries: int
    mrr10: float
    ndcg10: float
    hit1: float
    hit3: float
    hit10: float

    @classmethod
    def from_ranks(cls, ranks: list[int | None]) -> "MetricRow":
        return cls(
            queries=len(ranks),
            mrr10=mrr_at_10(ranks),
            ndcg10=ndcg_at_10(ranks),
            hit1=hit_at_k(ranks, 1),
            hit3=hit_at_k(ranks, 3),
            hit10=hit_at_k(ranks, 10),
        )


@dataclass
class EvalReport:
    pool_size: int
    protocol: str                      # "full-collection" | "split-only"
    ranks: dict[str, int | None]       # query_id -> 1-based rank of its positive
    full: MetricRow
    per_domain: dict[str, MetricRow] = field(default_factory=dict)

    def to_json(self) -> str:
        def row(r: MetricRow) -> dict:
            return {"queries": r.queries, "mrr10": r.mrr10, "ndcg10": r.ndcg10,
                    "hit1": r.hit1, "hit3": r.hit3, "hit10": r.hit10}
        obj = {
            "pool_size": self.pool_size,
            "protocol": self.protocol,
            "full": row(self.full),
            "per_domain": {d: row(r) for d, r in sorted(self.per_domain.items())},
            "ranks": {q: self.ranks[q] for q in sorted(self.ranks)},
        }
        return json.dumps(obj, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["group", "queries", "mrr10", "ndcg10", "hit1", "hit3", "hit10"])
            for name, r in [("full", self.full)] + sorted(self.per_domain.items()):
                w.writerow([name, r.queries, f"{r.mrr10:.5f}", f"{r.ndcg10:.5f}",
                            f"{r.hit1:.5f}", f"{r.hit3:.5f}", f"{r.hit10:.5f}"])


def rank_of(ranked_ids: list[str], relevant: str) -> int | None:
    try:
        return ranked_ids.index(relevant) + 1
    except ValueError:
        return None


def evaluate(queries: EmbeddingStore, index, qrels: QRels,
             grouping: dict[str, str] | None = None,
             protocol: str = "full-collection",
             ef_search: int | None = None) -> EvalReport:
    """Rank every qrels query against the whole index and aggregate.

    grouping maps doc_id -> domain; queries whose relevant document has no
    grouping entry only contribute to the full-set row.
    """
    pool_size = len(index.doc_ids)
    doc_set = set(index.doc_ids)
    for qid, did in qrels.pairs.items():
        if qid not in queries:
            raise EvalError(f"query id missing from store: {qid!r}")
        if did not in doc_set:
            raise EvalError(f"relevant doc missing from index: {did!r}")

    ranks: dict[str, int | None] = {}
    by_domain: dict[str, list[int | None]] = {}
    for qid in sorted(qrels.pairs):
        did = qrels.pairs[qid]
        result = search(index, queries.vector(qid), k=max(pool_size, 1),
                        ef_search=ef_search if ef_search is not None else pool_size)
        r = rank_of([h[0] for h in result.hits], did)
        ranks[qid] = r
        if grouping and did in grouping:
            by_domain.setdefault(grouping[did], []).append(r)

    return EvalReport(
        pool_size=pool_size,
        protocol=protocol,
        ranks=ranks,
        full=MetricRow.from_ranks(list(ranks.values())),
        per_domain={d: MetricRow.from_ranks(rs) for d, rs in by_domain.items()},
    )


def weighted_average(rows: list[MetricRow]) -> MetricRow:
    """Query-count weighted combination of per-domain rows."""
    total = sum(r.queries for r in rows)
    if total == 0:
        raise EvalError("no queries to average")

    def avg(attr):
        return sum(getattr(r, attr) * r.queries for r in rows) / total

    return MetricRow(queries=total, mrr10=avg("mrr10"), ndcg10=avg("ndcg10"),
                     hit1=avg("hit1"), hit3=avg("hit3"), hit10=avg("hit10"))
