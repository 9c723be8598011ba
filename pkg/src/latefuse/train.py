"""Optimize fusion parameters over frozen embedding stores.

The trainable surface is tiny (alpha / logit scale / bias, or a one-hidden-
layer MLP), so backprop through fuse -> L2-normalize -> cosine -> loss is
done analytically in NumPy, in 64-bit. AdamW applies decoupled weight decay
to MLP weight matrices only; the learning rate ramps linearly over the
warmup fraction and then follows cosine decay to zero. Runs are deterministic
for a fixed seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses
from .fusion import FusionParams, fuse_batch
from .store import EmbeddingStore, group_images, mean_pool_images, query_doc_id

LOSSES = ("bce", "infonce")


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss: str = "bce"
    fusion: str = "weighted_sum"
    batch_size: int = 32
    lr: float = 1e-2
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    warmup_frac: float = 0.1
    max_epochs: int = 200
    patience_epochs: int = 20
    pos_weight: float | None = None   # None -> batch_size - 1 (>= 1)
    temperature: float = 0.07
    seed: int = 0
    mlp_hidden: int | None = None
    scale_init: float = 10.0
    bias_init: float = -5.0
    train_scale_bias: bool = True

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ValueError("warmup_frac must lie in [0, 1]")
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ValueError("pos_weight must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def from_json(cls, path, **overrides) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def effective_pos_weight(self, batch_size: int) -> float:
        if self.pos_weight is not None:
            return self.pos_weight
        return float(max(batch_size - 1, 1))


@dataclass
class TrainingBatch:
    query_vecs: np.ndarray   # (B, d)
    text_vecs: np.ndarray    # (B, d)
    img_vecs: np.ndarray     # (B, d)
    doc_ids: list[str]

    def __post_init__(self):
        shapes = {self.query_vecs.shape, self.text_vecs.shape, self.img_vecs.shape}
        if len(shapes) != 1:
            raise ValueError(f"batch matrices disagree in shape: {shapes}")
        if len(self.doc_ids) != self.query_vecs.shape[0]:
            raise ValueError("doc_ids length != batch size")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("duplicate doc in one batch")

    @property
    def size(self) -> int:
        return self.query_vecs.shape[0]


@dataclass
class FusionDataset:
    """Aligned per-document text/pooled-image vectors plus query pairs."""

    dim: int
    doc_ids: list[str]
    text: np.ndarray          # (N, d) float64
    img: np.ndarray           # (N, d) float64, raw image mean
    query_ids: list[str]
    query_vecs: np.ndarray    # (Q, d) float64
    pairs: list[tuple[int, int]]  # (query_row, doc_row)

    _doc_row: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._doc_row = {d: i for i, d in enumerate(self.doc_ids)}


def check_alignment(text_store: EmbeddingStore, image_store: EmbeddingStore,
                    query_store: EmbeddingStore) -> list[str]:
    """Human-readable list of alignment violations (empty when aligned)."""
    problems = []
    dims = {text_store.dim, image_store.dim, query_store.dim}
    if len(dims) != 1:
        problems.append(f"stores disagree on dim: {sorted(dims)}")
        return problems
    groups = group_images(image_store)
    docs_with_queries = {query_doc_id(q) for q in query_store.ids}
    for did in text_store.ids:
        if did not in groups:
            problems.append(f"doc {did!r} has no image embeddings")
        if did not in docs_with_queries:
            problems.append(f"doc {did!r} has no query embedding")
    doc_set = set(text_store.ids)
    for did in groups:
        if did not in doc_set:
            problems.append(f"image group {did!r} has no text embedding")
    for qid in query_store.ids:
        if query_doc_id(qid) not in doc_set:
            problems.append(f"query {qid!r} points at unknown doc")
    return problems


def build_dataset(text_store: EmbeddingStore, image_store: EmbeddingStore,
                  query_store: EmbeddingStore) -> FusionDataset:
    problems = check_alignment(text_store, image_store, query_store)
    if problems:
        raise TrainError("misaligned stores:\n  " + "\n  ".join(problems))
    groups = group_images(image_store)
    doc_ids = list(text_store.ids)
    text = text_store.matrix.astype(np.float64)
    img = np.stack([mean_pool_images(groups[d], image_store) for d in doc_ids])
    doc_row = {d: i for i, d in enumerate(doc_ids)}
    pairs = [(qrow, doc_row[query_doc_id(qid)])
             for qrow, qid in enumerate(query_store.ids)]
    return FusionDataset(dim=text_store.dim, doc_ids=doc_ids, text=text, img=img,
                         query_ids=list(query_store.ids),
                         query_vecs=query_store.matrix.astype(np.float64),
                         pairs=pairs)


def multi_query_pairing(doc_id: str, queries: list[str]) -> list[tuple[str, str]]:
    """One (query_id, doc_id) training pair per query of the document."""
    if not queries:
        raise ValueError(f"doc {doc_id!r} has no queries")
    if len(queries) == 1:
        return [(doc_id, doc_id)]
    return [(f"{doc_id}@q{i}", doc_id) for i in range(len(queries))]


def make_batches(pairs: list[tuple[int, int]], batch_size: int,
                 rng: random.Random) -> list[list[tuple[int, int]]]:
    """Shuffled batches with no two pairs sharing a document; pairs that
    collide are deferred to later batches, never dropped."""
    remaining = list(pairs)
    rng.shuffle(remaining)
    batches: list[list[tuple[int, int]]] = []
    while remaining:
        deferred = []
        batch: list[tuple[int, int]] = []
        docs: set[int] = set()
        for p in remaining:
            if p[1] in docs:
                deferred.append(p)
                continue
            batch.append(p)
            docs.add(p[1])
            if len(batch) == batch_size:
                batches.append(batch)
                batch, docs = [], set()
        if batch:
            batches.append(batch)
        remaining = deferred
    return batches


def _normalize_rows64(M: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0.0):
        raise TrainError(f"zero-norm row in {what}")
    return M / norms[:, None], norms


def similarity_matrix(batch: TrainingBatch, params: FusionParams) -> np.ndarray:
    """S[i][j] = cosine(query_i, fuse(text_j, img_j))."""
    Qh, _ = _normalize_rows64(np.asarray(batch.query_vecs, dtype=np.float64), "queries")
    F = fuse_batch(batch.text_vecs, batch.img_vecs, params)
    Fh, _ = _normalize_rows64(F, "fused docs")
    return Qh @ Fh.T


def loss_and_grads(batch: TrainingBatch, params: FusionParams,
                   config: TrainConfig) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and exact gradients for every trainable scalar/weight."""
    Qh, _ = _normalize_rows64(np.asarray(batch.query_vecs, dtype=np.float64), "queries")
    T = np.asarray(batch.text_vecs, dtype=np.float64)
    G = np.asarray(batch.img_vecs, dtype=np.float64)
    F = fuse_batch(T, G, params)
    Fh, norms = _normalize_rows64(F, "fused docs")
    S = Qh @ Fh.T

    grads: dict[str, np.ndarray] = {}
    if config.loss == "bce":
        pw = config.effective_pos_weight(batch.size)
        loss = losses.bce_loss(S, params.scale, params.bias, pw)
        dS, dscale, dbias = losses.bce_grad(S, params.scale, params.bias, pw)
        if params.train_scale_bias:
            grads["log_scale"] = np.float64(dscale * params.scale)
            grads["bias"] = np.float64(dbias)
    else:
        loss = losses.infonce_loss(S, config.temperature)
        dS = losses.infonce_grad(S, config.temperature)

    if not np.isfinite(loss):
        raise TrainError(f"non-finite loss (S range [{S.min():.3g}, {S.max():.3g}])")

    dFh = dS.T @ Qh                                    # (B, d)
    dF = (dFh - (dFh * Fh).sum(axis=1, keepdims=True) * Fh) / norms[:, None]

    if params.mode == "weighted_sum":
        a = params.alpha
        d_alpha = float((dF * (T - G)).sum())
        grads["alpha_raw"] = np.float64(d_alpha * a * (1.0 - a))
    else:
        Z = np.concatenate([T, G], axis=1)
        pre = Z @ params.w1.T + params.b1
        H = np.maximum(pre, 0.0)
        dH = dF @ params.w2
        dpre = dH * (pre > 0.0)
        grads["w2"] = dF.T @ H
        grads["b2"] = dF.sum(axis=0)
        grads["w1"] = dpre.T @ Z
        grads["b1"] = dpre.sum(axis=0)
    return float(loss), grads


# parameter names subject to decoupled weight decay
DECAYED = {"w1", "w2"}


class AdamW:
    def __init__(self, lr: float, weight_decay: float, eps: float,
                 beta1: float = 0.9, beta2: float = 0.999):
        self.lr = lr
        self.weight_decay = weight_decay
        self.eps = eps
        self.beta1, self.beta2 = beta1, beta2
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, values: dict[str, np.ndarray],
             grads: dict[str, np.ndarray], lr_scale: float = 1.0) -> None:
        self.t += 1
        lr = self.lr * lr_scale
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1 ** self.t)
            vhat = self.v[name] / (1 - self.beta2 ** self.t)
            update = mhat / (np.sqrt(vhat) + self.eps)
            if name in DECAYED:
                update = update + self.weight_decay * values[name]
            values[name] = values[name] - lr * update


def lr_schedule(step: int, total_steps: int, warmup_frac: float) -> float:
    """Linear warmup then cosine decay to 0, as a multiplier on the base lr."""
    warmup = max(int(round(warmup_frac * total_steps)), 0)
    if warmup and step < warmup:
        return (step + 1) / warmup
    if total_steps <= warmup:
        return 1.0
    progress = (step - warmup) / (total_steps - warmup)
    return 0.5 * (1.0 + np.cos(np.pi * min(progress, 1.0)))


def _params_values(params: FusionParams) -> dict[str, np.ndarray]:
    vals = {"log_scale": np.float64(params.log_scale), "bias": np.float64(params.bias)}
    if params.mode == "weighted_sum":
        vals["alpha_raw"] = np.float64(params.alpha_raw)
    else:
        vals.update(w1=params.w1.copy(), b1=params.b1.copy(),
                    w2=params.w2.copy(), b2=params.b2.copy())
    return vals


def _apply_values(params: FusionParams, vals: dict[str, np.ndarray]) -> None:
    params.log_scale = float(vals["log_scale"])
    params.bias = float(vals["bias"])
    if params.mode == "weighted_sum":
        params.alpha_raw = float(vals["alpha_raw"])
    else:
        params.w1, params.b1 = vals["w1"], vals["b1"]
        params.w2, params.b2 = vals["w2"], vals["b2"]


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mrr10: float = -1.0
    stopped_early: bool = False

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.steps:
                f.write(json.dumps(rec) + "\n")
            for rec in self.epochs:
                f.write(json.dumps(rec) + "\n")
            f.write(json.dumps({"best_epoch": self.best_epoch,
                                "best_val_mrr10": self.best_val_mrr10,
                                "stopped_early": self.stopped_early}) + "\n")


def validation_mrr10(data: FusionDataset, params: FusionParams) -> float:
    """MRR@10 of each validation query against the validation pool only."""
    F = fuse_batch(data.text, data.img, params)
    Fh, _ = _normalize_rows64(F, "fused validation docs")
    Qh, _ = _normalize_rows64(data.query_vecs, "validation queries")
    S = Qh @ Fh.T                        # (Q, N)
    id_rank = np.argsort(np.argsort(np.asarray(data.doc_ids)))
    total = 0.0
    for qrow, drow in data.pairs:
        scores = S[qrow]
        order = np.lexsort((id_rank, -scores))
        rank = int(np.where(order == drow)[0][0]) + 1
        if rank <= 10:
            total += 1.0 / rank
    return total / len(data.pairs)


def train(train_data: FusionDataset, valid_data: FusionDataset,
          config: TrainConfig,
          initial_params: FusionParams | None = None) -> tuple[FusionParams, TrainLog]:
    """Full training loop with early stopping on validation MRR@10."""
    if initial_params is not None:
        params = initial_params.copy()
    elif config.fusion == "mlp":
        params = FusionParams.mlp(train_data.dim, hidden=config.mlp_hidden,
                                  seed=config.seed, scale=config.scale_init,
                                  bias=config.bias_init,
                                  train_scale_bias=config.train_scale_bias)
    else:
        params = FusionParams.weighted_sum(train_data.dim, scale=config.scale_init,
                                           bias=config.bias_init,
                                           train_scale_bias=config.train_scale_bias)

    rng = random.Random(config.seed)
    opt = AdamW(config.lr, config.weight_decay, config.adam_eps)
    values = _params_values(params)
    trainable = set(values)
    if not params.train_scale_bias:
        trainable -= {"log_scale", "bias"}

    steps_per_epoch = max(len(make_batches(train_data.pairs, config.batch_size,
                                           random.Random(config.seed))), 1)
    total_steps = steps_per_epoch * config.max_epochs

    log_ = TrainLog()
    best_params = params.copy()
    best_mrr = -1.0
    epochs_since_best = 0
    step = 0

    for epoch in range(config.max_epochs):
        for batch_pairs in make_batches(train_data.pairs, config.batch_size, rng):
            qrows = [p[0] for p in batch_pairs]
            drows = [p[1] for p in batch_pairs]
            batch = TrainingBatch(
                query_vecs=train_data.query_vecs[qrows],
                text_vecs=train_data.text[drows],
                img_vecs=train_data.img[drows],
                doc_ids=[train_data.doc_ids[i] for i in drows],
            )
            loss, grads = loss_and_grads(batch, params, config)
            grads = {k: v for k, v in grads.items() if k in trainable}
            lr_scale = lr_schedule(step, total_steps, config.warmup_frac)
            opt.step(values, grads, lr_scale)
            _apply_values(params, values)
            log_.steps.append({"step": step, "epoch": epoch, "loss": loss,
                               "lr": config.lr * lr_scale})
            step += 1

        val_mrr = validation_mrr10(valid_data, params)
        log_.epochs.append({"epoch": epoch, "val_mrr10": val_mrr})
        if val_mrr > best_mrr:
            best_mrr = val_mrr
            best_params = params.copy()
            log_.best_epoch = epoch
            epochs_since_best = 0
        else:
            if val_mrr == best_mrr:
                # tie: keep the later checkpoint (lower training loss) but
                # still count toward patience, which tracks strict improvement
                best_params = params.copy()
                log_.best_epoch = epoch
            epochs_since_best += 1
            if epochs_since_best >= config.patience_epochs:
                log_.stopped_early = True
                break

    log_.best_val_mrr10 = best_mrr
    return best_params, log_


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
