"""Unified multi-modal document format, quality filters, and corpus statistics.

A corpus file is JSONL: one document per line with fields exactly
{id, domain, texts, images, queries}. Filtering applies three rules in fixed
order (images, tokens, garbledness); a rejected document carries the first
failing rule. All operations are pure given (doc, policy, tokenizer), so
callers may parallelize per document as long as output order follows input
order.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, asdict
from typing import Iterable

from .tokenize import TokenizerHandle, count_tokens

log = logging.getLogger(__name__)

DOMAINS = ("wiki", "arxiv", "slide")
DOC_FIELDS = ("id", "domain", "texts", "images", "queries")

_INLINE_MATH = re.compile(r"\$[^$]*\$")
_BLOCK_MATH = re.compile(r"\\begin\{equation\}.*?\\end\{equation\}", re.DOTALL)
_LATEX_ARTIFACT = re.compile(r"\\(begin|end)\{equation\}")


class CorpusError(ValueError):
    pass


@dataclass
class Document:
    id: str
    domain: str
    texts: list[str]
    images: list[str]
    queries: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        """Canonical one-line serialization (fixed key order, no ASCII escaping)."""
        obj = {f: getattr(self, f) for f in DOC_FIELDS}
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


@dataclass
class FilterPolicy:
    min_tokens: int = 300
    min_images: int = 1
    garbled_min_run: int = 10
    garbled_doc_fraction: float = 0.5
    strip_math: bool = True  # math stripping applies to arxiv-domain documents

    def __post_init__(self):
        if self.garbled_min_run < 1:
            raise ValueError("garbled_min_run must be >= 1")
        if not 0.0 <= self.garbled_doc_fraction <= 1.0:
            raise ValueError("garbled_doc_fraction must lie in [0, 1]")

    @classmethod
    def from_json(cls, path) -> "FilterPolicy":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


@dataclass
class Reject:
    id: str
    rule: str
    detail: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


@dataclass
class FilterVerdict:
    accepted: bool
    rule: str | None = None
    detail: str | None = None


def _parse_line(obj: dict, strict: bool) -> Document:
    if not isinstance(obj, dict):
        raise CorpusError("line is not a JSON object")
    missing = [f for f in DOC_FIELDS if f not in obj]
    if missing:
        raise CorpusError(f"missing field: {', '.join(missing)}")
    unknown = [k for k in obj if k not in DOC_FIELDS]
    if unknown:
        if strict:
            raise CorpusError(f"unknown field: {', '.join(sorted(unknown))}")
        log.warning("ignoring unknown fields %s on doc %r", unknown, obj.get("id"))
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise CorpusError("field 'id' must be a non-empty string")
    if obj["domain"] not in DOMAINS:
        raise CorpusError(f"field 'domain' must be one of {DOMAINS}, got {obj['domain']!r}")
    for name in ("texts", "images", "queries"):
        val = obj[name]
        if not isinstance(val, list) or not all(isinstance(x, str) for x in val):
            raise CorpusError(f"field '{name}' must be a list of strings")
    return Document(id=obj["id"], domain=obj["domain"], texts=list(obj["texts"]),
                    images=list(obj["images"]), queries=list(obj["queries"]))


def load_corpus(path, expected_split: str | None = None,
                strict: bool = True) -> tuple[list[Document], list[Reject]]:
    """Parse a JSONL corpus file.

    Malformed lines become Reject entries instead of aborting the run;
    duplicate ids and unreadable files raise.
    """
    docs: list[Document] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                rejects.append(Reject(id=f"line:{lineno}", rule="parse", detail=str(e)))
                continue
            try:
                doc = _parse_line(obj, strict)
            except CorpusError as e:
                doc_id = obj.get("id", f"line:{lineno}") if isinstance(obj, dict) else f"line:{lineno}"
                rejects.append(Reject(id=str(doc_id), rule="schema", detail=str(e)))
                continue
            if doc.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs, rejects


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(doc.to_json() + "\n")


def is_garbled(paragraph: str, policy: FilterPolicy) -> bool:
    """True iff the paragraph has a run of >= garbled_min_run special characters
    (neither Unicode word characters nor whitespace), or, with strip_math on,
    residual equation-environment markers."""
    run = re.compile(r"[^\w\s]{%d,}" % policy.garbled_min_run)
    if run.search(paragraph):
        return True
    if policy.strip_math and _LATEX_ARTIFACT.search(paragraph):
        return True
    return False


def strip_math(text: str) -> str:
    """Remove $...$ inline spans and equation environments (non-greedy, non-nested).

    Unbalanced delimiters are left untouched and logged.
    """
    out = _BLOCK_MATH.sub("", text)
    out = _INLINE_MATH.sub("", out)
    if "$" in out:
        log.warning("unbalanced '$' left in place: %r", out[:80])
    if _LATEX_ARTIFACT.search(out):
        log.warning("unbalanced equation environment left in place: %r", out[:80])
    return out


def preprocess_document(doc: Document, policy: FilterPolicy) -> Document:
    """Apply math stripping ahead of filtering (arxiv documents only)."""
    if policy.strip_math and doc.domain == "arxiv":
        return Document(id=doc.id, domain=doc.domain,
                        texts=[strip_math(t) for t in doc.texts],
                        images=list(doc.images), queries=list(doc.queries))
    return doc


def filter_document(doc: Document, policy: FilterPolicy,
                    tokenizer: TokenizerHandle) -> FilterVerdict:
    """Accept iff images >= min_images, tokens > min_tokens, and the garbled
    paragraph fraction <= garbled_doc_fraction. Math is stripped first for
    arxiv documents; the verdict names the first failing rule."""
    doc = preprocess_document(doc, policy)
    if len(doc.images) < policy.min_images:
        return FilterVerdict(False, "images",
                             f"{len(doc.images)} image(s), need >= {policy.min_images}")
    tokens = sum(count_tokens(t, tokenizer) for t in doc.texts)
    if tokens <= policy.min_tokens:
        return FilterVerdict(False, "tokens",
                             f"{tokens} token(s), need > {policy.min_tokens}")
    if doc.texts:
        garbled = sum(1 for t in doc.texts if is_garbled(t, policy))
        frac = garbled / len(doc.texts)
        if frac > policy.garbled_doc_fraction:
            return FilterVerdict(False, "garbled",
                                 f"{frac:.3f} garbled fraction, max {policy.garbled_doc_fraction}")
    else:
        return FilterVerdict(False, "texts", "no text blocks")
    return FilterVerdict(True)


@dataclass
class DomainStats:
    train: int = 0
    valid: int = 0
    test: int = 0
    avg_images: float = 0.0
    avg_text_tokens: float = 0.0
    avg_query_tokens: float = 0.0

    @property
    def total(self) -> int:
        return self.train + self.valid + self.test


@dataclass
class CorpusStats:
    per_domain: dict[str, DomainStats]
    overall: DomainStats

    def to_json(self) -> str:
        def row(s: DomainStats) -> dict:
            return {"train": s.train, "valid": s.valid, "test": s.test,
                    "total": s.total, "avg_images": s.avg_images,
                    "avg_text_tokens": s.avg_text_tokens,
                    "avg_query_tokens": s.avg_query_tokens}
        obj = {d: row(s) for d, s in sorted(self.per_domain.items())}
        obj["total"] = row(self.overall)
        return json.dumps(obj, indent=2, sort_keys=True)


def compute_stats(docs: list[Document], tokenizer: TokenizerHandle,
                  split: str = "train") -> CorpusStats:
    """Token-level statistics over one split; averages are per document."""
    if not docs:
        raise CorpusError("cannot compute stats over an empty corpus")
    if split not in ("train", "valid", "test"):
        raise ValueError(f"unknown split: {split!r}")

    def averages(group: list[Document]) -> tuple[float, float, float]:
        images = sum(len(d.images) for d in group)
        text_tokens = sum(count_tokens(t, tokenizer) for d in group for t in d.texts)
        n_queries = sum(len(d.queries) for d in group)
        query_tokens = sum(count_tokens(q, tokenizer) for d in group for q in d.queries)
        return (images / len(group), text_tokens / len(group),
                query_tokens / n_queries if n_queries else 0.0)

    per_domain: dict[str, DomainStats] = {}
    for domain in DOMAINS:
        group = [d for d in docs if d.domain == domain]
        if not group:
            continue
        ai, at, aq = averages(group)
        s = DomainStats(avg_images=ai, avg_text_tokens=at, avg_query_tokens=aq)
        setattr(s, split, len(group))
        per_domain[domain] = s
    ai, at, aq = averages(docs)
    overall = DomainStats(avg_images=ai, avg_text_tokens=at, avg_query_tokens=aq)
    setattr(overall, split, len(docs))
    return CorpusStats(per_domain=per_domain, overall=overall)


def merge_stats(parts: list[CorpusStats]) -> CorpusStats:
    """Combine single-split stats into one report (counts add, averages re-weight)."""
    if not parts:
        raise CorpusError("nothing to merge")

    def merge_rows(rows: list[tuple[int, DomainStats]]) -> DomainStats:
        out = DomainStats()
        total = sum(n for n, _ in rows)
        for n, r in rows:
            out.train += r.train
            out.valid += r.valid
            out.test += r.test
            out.avg_images += r.avg_images * n / total
            out.avg_text_tokens += r.avg_text_tokens * n / total
            out.avg_query_tokens += r.avg_query_tokens * n / total
        return out

    domains = sorted({d for p in parts for d in p.per_domain})
    per_domain = {}
    for d in domains:
        rows = [(p.per_domain[d].total, p.per_domain[d]) for p in parts if d in p.per_domain]
        per_domain[d] = merge_rows(rows)
    overall = merge_rows([(p.overall.total, p.overall) for p in parts])
    return CorpusStats(per_domain=per_domain, overall=overall)
