"""Command-line entry point wiring curation, training, indexing, search and
evaluation into file-to-file pipelines.

Exit codes: 0 success, 1 data/runtime error, 2 usage error. Every command
takes a --seed and writes a run manifest next to its main output so reruns
can be verified byte-for-byte (timestamps excluded).
"""

from __future__ import annotations

import hashlib
import json
import sys
import time

import click
import numpy as np

from . import __version__, corpus as corpus_mod, evaluation, retrieval, store, train as train_mod
from .fusion import FusionParams, fuse_batch, load_params, save_params
from .tokenize import load_tokenizer


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command: str, inputs: list, config: dict,
                   seed: int | None) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True, default=str).encode()).hexdigest(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__)
def main():
    """Document-level multi-modal retrieval engine."""


@main.command("curate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--rejects", "rejects_path", type=click.Path(dir_okay=False))
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False))
@click.option("--tokenizer", "tokenizer_spec", default="whitespace", show_default=True)
@click.option("--split", default="train", type=click.Choice(["train", "valid", "test"]))
@click.option("--strict/--no-strict", default=True)
@click.option("--seed", default=0, type=int)
def cmd_curate(in_path, out_path, policy_path, rejects_path, stats_path,
               tokenizer_spec, split, strict, seed):
    """Filter a JSONL corpus and emit accepted docs, rejects and statistics."""
    policy = (corpus_mod.FilterPolicy.from_json(policy_path)
              if policy_path else corpus_mod.FilterPolicy())
    tokenizer = load_tokenizer(tokenizer_spec)
    try:
        docs, rejects = corpus_mod.load_corpus(in_path, expected_split=split,
                                               strict=strict)
    except (OSError, corpus_mod.CorpusError) as e:
        _fail(str(e))

    accepted = []
    for doc in docs:
        verdict = corpus_mod.filter_document(doc, policy, tokenizer)
        if verdict.accepted:
            accepted.append(corpus_mod.preprocess_document(doc, policy))
        else:
            rejects.append(corpus_mod.Reject(doc.id, verdict.rule, verdict.detail))

    corpus_mod.write_corpus(accepted, out_path)
    if rejects_path:
        with open(rejects_path, "w", encoding="utf-8") as f:
            for r in rejects:
                f.write(r.to_json() + "\n")
    if stats_path and accepted:
        stats = corpus_mod.compute_stats(accepted, tokenizer, split=split)
        with open(stats_path, "w", encoding="utf-8") as f:
            f.write(stats.to_json() + "\n")
    write_manifest(out_path, "curate", [in_path],
                   {"policy": vars(policy), "policy_source": policy_path or "defaults",
                    "tokenizer": tokenizer_spec, "split": split, "strict": strict},
                   seed)
    click.echo(f"accepted {len(accepted)} / {len(docs)} documents "
               f"({len(rejects)} rejects)")


def _load_stores(text_emb, img_emb, query_emb):
    return (store.read_store(text_emb), store.read_store(img_emb),
            store.read_store(query_emb))


@main.command("train")
@click.option("--text-emb", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--img-emb", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query-emb", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--valid-text-emb", type=click.Path(exists=True, dir_okay=False))
@click.option("--valid-img-emb", type=click.Path(exists=True, dir_okay=False))
@click.option("--valid-query-emb", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--log", "log_path", type=click.Path(dir_okay=False))
@click.option("--loss", type=click.Choice(train_mod.LOSSES))
@click.option("--fusion", type=click.Choice(["weighted_sum", "mlp"]))
@click.option("--batch-size", type=int)
@click.option("--lr", type=float)
@click.option("--max-epochs", type=int)
@click.option("--patience", "patience_epochs", type=int)
@click.option("--seed", type=int)
def cmd_train(text_emb, img_emb, query_emb, valid_text_emb, valid_img_emb,
              valid_query_emb, config_path, out_ckpt, log_path, **overrides):
    """Train fusion parameters; prints best validation MRR@10."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        if config_path:
            config = train_mod.TrainConfig.from_json(config_path, **overrides)
        else:
            config = train_mod.TrainConfig(**overrides)
    except (ValueError, TypeError) as e:
        _fail(f"bad config: {e}")

    try:
        tr = train_mod.build_dataset(*_load_stores(text_emb, img_emb, query_emb))
        if valid_text_emb:
            va = train_mod.build_dataset(
                *_load_stores(valid_text_emb, valid_img_emb, valid_query_emb))
        else:
            va = tr
    except (store.StoreFormatError, train_mod.TrainError, OSError) as e:
        _fail(str(e))

    try:
        params, log_ = train_mod.train(tr, va, config)
    except train_mod.TrainError as e:
        _fail(str(e))
    save_params(params, out_ckpt)
    if log_path:
        log_.write_jsonl(log_path)
    inputs = [text_emb, img_emb, query_emb] + (
        [valid_text_emb, valid_img_emb, valid_query_emb] if valid_text_emb else [])
    write_manifest(out_ckpt, "train", inputs, train_mod.config_to_dict(config),
                   config.seed)
    click.echo(f"loss={config.loss} fusion={config.fusion} "
               f"best_val_mrr10={log_.best_val_mrr10:.5f} "
               f"best_epoch={log_.best_epoch}")


def _fused_store(text_emb, img_emb, ckpt) -> store.EmbeddingStore:
    text_store = store.read_store(text_emb)
    image_store = store.read_store(img_emb)
    params = load_params(ckpt)
    groups = store.group_images(image_store)
    missing = [d for d in text_store.ids if d not in groups]
    if missing:
        raise train_mod.TrainError(f"docs without images: {missing[:5]}")
    img = np.stack([store.mean_pool_images(groups[d], image_store)
                    for d in text_store.ids])
    fused = fuse_batch(text_store.matrix.astype(np.float64), img, params)
    fused = retrieval.normalize_rows(fused)
    return store.EmbeddingStore(dim=text_store.dim, kind="text", normalized=True,
                                ids=list(text_store.ids), matrix=fused)


@main.command("index")
@click.option("--text-emb", type=click.Path(exists=True, dir_okay=False))
@click.option("--img-emb", type=click.Path(exists=True, dir_okay=False))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False))
@click.option("--doc-emb", type=click.Path(exists=True, dir_okay=False),
              help="Pre-fused document store (alternative to text/img/ckpt).")
@click.option("--kind", default="flat", type=click.Choice(["flat", "hnsw"]),
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--m-links", default=16, type=int, show_default=True)
@click.option("--ef-construction", default=200, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def cmd_index(text_emb, img_emb, ckpt, doc_emb, kind, out_path,
              m_links, ef_construction, seed):
    """Build a flat or HNSW index over fused document vectors."""
    try:
        if doc_emb:
            docs = store.read_store(doc_emb)
            inputs = [doc_emb]
        elif text_emb and img_emb and ckpt:
            docs = _fused_store(text_emb, img_emb, ckpt)
            inputs = [text_emb, img_emb, ckpt]
        else:
            raise click.UsageError(
                "provide --doc-emb or all of --text-emb/--img-emb/--ckpt")
        if kind == "flat":
            index = retrieval.build_flat(docs)
        else:
            index = retrieval.build_hnsw(docs, m_links=m_links,
                                         ef_construction=ef_construction, seed=seed)
        retrieval.write_index(index, out_path)
    except click.UsageError:
        raise
    except (ValueError, OSError, train_mod.TrainError) as e:
        _fail(str(e))
    write_manifest(out_path, "index", inputs,
                   {"kind": kind, "m_links": m_links,
                    "ef_construction": ef_construction}, seed)
    click.echo(f"indexed {len(docs)} documents ({kind}, backend={retrieval.BACKEND})")


@main.command("search")
@click.option("--index", "index_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--query-emb", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=10, type=click.IntRange(min=1), show_default=True)
@click.option("--ef-search", default=100, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, type=int)
def cmd_search(index_path, query_emb, k, ef_search, out_path, seed):
    """Rank documents for every query in a store; JSONL results."""
    try:
        index = retrieval.read_index(index_path)
        queries = store.read_store(query_emb)
        with open(out_path, "w", encoding="utf-8") as f:
            for qid in queries.ids:
                result = retrieval.search(index, queries.vector(qid), k,
                                          ef_search=ef_search)
                f.write(json.dumps({
                    "query_id": qid,
                    "hits": [{"doc_id": d, "score": s} for d, s in result.hits],
                }) + "\n")
    except (ValueError, OSError) as e:
        _fail(str(e))
    write_manifest(out_path, "search", [index_path, query_emb],
                   {"k": k, "ef_search": ef_search}, seed)
    click.echo(f"searched {len(queries)} queries")


@main.command("eval")
@click.option("--index", "index_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--query-emb", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qrels", "qrels_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--full-collection", "corpus_paths", nargs=3,
              type=click.Path(exists=True, dir_okay=False),
              help="train/valid/test corpus JSONL files; enables pool checking "
                   "and per-domain rows.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False))
@click.option("--ef-search", type=int)
@click.option("--seed", default=0, type=int)
def cmd_eval(index_path, query_emb, qrels_path, corpus_paths, out_path,
             csv_path, ef_search, seed):
    """Full-collection evaluation: MRR@10, NDCG@10, HIT@{1,3,10}."""
    try:
        index = retrieval.read_index(index_path)
        queries = store.read_store(query_emb)
        qrels = evaluation.QRels.from_tsv(qrels_path)
        grouping = None
        protocol = "split-only"
        if corpus_paths:
            splits = []
            grouping = {}
            for p in corpus_paths:
                docs, _ = corpus_mod.load_corpus(p, strict=False)
                splits.append([d.id for d in docs])
                grouping.update({d.id: d.domain for d in docs})
            pool = evaluation.full_collection_pool(*splits)
            missing = [d for d in pool if d not in set(index.doc_ids)]
            if missing:
                raise evaluation.EvalError(
                    f"index is missing {len(missing)} pool docs, e.g. {missing[:3]}")
            protocol = "full-collection"
        report = evaluation.evaluate(queries, index, qrels, grouping=grouping,
                                     protocol=protocol, ef_search=ef_search)
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        if csv_path:
            report.write_csv(csv_path)
    except (ValueError, OSError) as e:
        _fail(str(e))
    inputs = [index_path, query_emb, qrels_path] + list(corpus_paths or ())
    write_manifest(out_path, "eval", inputs,
                   {"protocol": protocol, "ef_search": ef_search}, seed)
    r = report.full
    click.echo(f"pool={report.pool_size} mrr10={r.mrr10:.5f} ndcg10={r.ndcg10:.5f} "
               f"hit1={r.hit1:.5f} hit3={r.hit3:.5f} hit10={r.hit10:.5f}")


if __name__ == "__main__":
    main()
