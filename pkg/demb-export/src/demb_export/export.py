"""Export pipeline: corpus JSONL in, three DEMB stores out.

Per document: one text vector (blocks joined by the configured separator,
head-truncated at the encoder's token limit), one raw vector per image with
ids "docid#k", and one vector per query with ids "docid@qN". Failures are
recorded and skipped,
never fatal for the batch. Every store gets a JSON audit sidecar naming the
encoder so the embeddings stay attributable.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import DualEncoder, EncodeError
from .store_format import StorePayload, write_demb

log = logging.getLogger(__name__)


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    corpus_path: str
    text_out: str
    image_out: str
    query_out: str
    separator: str = "\n"
    batch_size: int = 32
    image_root: str | None = None   # resolve relative image refs against this

    def resolve_image(self, ref: str) -> str:
        if self.image_root is not None:
            return str(Path(self.image_root) / ref)
        return ref


@dataclass
class ExportRecord:
    """One skipped item and why."""

    doc_id: str
    item: str   # "text" | image ref | query index
    reason: str


@dataclass
class ExportReport:
    exported: int = 0
    skipped: list[ExportRecord] = field(default_factory=list)


def load_corpus(path) -> list[dict]:
    docs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ExportError(f"{path}:{lineno}: {e}") from e
            for fname in ("id", "domain", "texts", "images", "queries"):
                if fname not in obj:
                    raise ExportError(f"{path}:{lineno}: missing field {fname!r}")
            if obj["id"] in seen:
                raise ExportError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            docs.append(obj)
    return docs


def _write_audit(store_path, encoder: DualEncoder, job: ExportJob,
                 report: ExportReport) -> None:
    audit = {
        "checkpoint": encoder.name,
        "dim": encoder.dim,
        "separator": job.separator,
        "truncation": f"head, {encoder.max_tokens} tokens",
        "date": time.strftime("%Y-%m-%d"),
        "exported": report.exported,
        "skipped": [{"doc_id": r.doc_id, "item": r.item, "reason": r.reason}
                    for r in report.skipped],
    }
    with open(str(store_path) + ".audit.json", "w", encoding="utf-8") as f:
        json.dump(audit, f, indent=2)


def export_text(job: ExportJob, encoder: DualEncoder) -> ExportReport:
    docs = load_corpus(job.corpus_path)
    report = ExportReport()
    ids, rows = [], []
    for doc in docs:
        joined = job.separator.join(doc["texts"])
        try:
            vec = encoder.encode_texts([joined])[0]
        except EncodeError as e:
            report.skipped.append(ExportRecord(doc["id"], "text", str(e)))
            continue
        ids.append(doc["id"])
        rows.append(vec)
    if not ids:
        raise ExportError("no document texts could be encoded")
    matrix = np.stack(rows)
    write_demb(StorePayload(kind="text", normalized=True, ids=ids,
                            matrix=matrix), job.text_out)
    report.exported = len(ids)
    _write_audit(job.text_out, encoder, job, report)
    return report


def export_images(job: ExportJob, encoder: DualEncoder) -> ExportReport:
    docs = load_corpus(job.corpus_path)
    report = ExportReport()
    ids, rows = [], []
    for doc in docs:
        doc_rows = []
        for k, ref in enumerate(doc["images"]):
            try:
                vec = encoder.encode_images([job.resolve_image(ref)])[0]
            except EncodeError as e:
                report.skipped.append(ExportRecord(doc["id"], ref, str(e)))
                continue
            doc_rows.append((f"{doc['id']}#{k}", vec))
        if doc["images"] and not doc_rows:
            log.warning("doc %r dropped: every image failed to encode",
                        doc["id"])
        for id_, vec in doc_rows:
            ids.append(id_)
            rows.append(vec)
    if not ids:
        raise ExportError("no images could be encoded")
    write_demb(StorePayload(kind="image", normalized=False, ids=ids,
                            matrix=np.stack(rows)), job.image_out)
    report.exported = len(ids)
    _write_audit(job.image_out, encoder, job, report)
    return report


def export_queries(job: ExportJob, encoder: DualEncoder) -> ExportReport:
    docs = load_corpus(job.corpus_path)
    report = ExportReport()
    ids, rows = [], []
    for doc in docs:
        for qi, query in enumerate(doc["queries"]):
            qid = f"{doc['id']}@q{qi}"
            try:
                vec = encoder.encode_texts([query])[0]
            except EncodeError as e:
                report.skipped.append(ExportRecord(doc["id"], f"query {qi}",
                                                   str(e)))
                continue
            ids.append(qid)
            rows.append(vec)
    if not ids:
        raise ExportError("no queries could be encoded")
    write_demb(StorePayload(kind="query", normalized=True, ids=ids,
                            matrix=np.stack(rows)), job.query_out)
    report.exported = len(ids)
    _write_audit(job.query_out, encoder, job, report)
    return report


def export_all(job: ExportJob, encoder: DualEncoder) -> dict[str, ExportReport]:
    return {
        "text": export_text(job, encoder),
        "image": export_images(job, encoder),
        "query": export_queries(job, encoder),
    }
