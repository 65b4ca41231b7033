"""OR-target construction and shared-nothing training of the chunk models.

Each chunk trains independently: its targets come from its own codebook
column, its inputs from its own feature-hash seed, and its shuffle order
from its own derived seed.  A chunk's trained parameters are a pure function
of (documents, code config, engine config, train config, chunk), so running
the K chunks serially or across a process pool yields bit-identical models.
Parallelism is across chunks only; within a chunk, batches are processed
sequentially in a fixed order.

Targets use positive-only association: a bucket is trained toward 1 whenever
any label pooled into it is relevant to the document, i.e. the few-hot target
is the OR of the document's label codes for that chunk.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .codes import CodeConfig, LabelCodebook, build_codebook
from .features import Document, FeatureMode, derive_chunk_seed, hash_token_ids
from .hashing import derive_seed
from .model import (
    AdamParams,
    ChunkModel,
    Gradients,
    LOSS_CLAMP_EPS,
    TargetVector,
    apply_update,
    init_model,
    quantize_to_f32,
    zero_adam_state,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    """Architecture knobs shared by every chunk model."""

    feature_dim: int
    hidden_dim: int
    feature_mode: FeatureMode = "counts"
    feature_seed: int = 0
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise ValueError("feature_dim and hidden_dim must be >= 1")
        if self.feature_mode not in ("counts", "binary"):
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")

    def chunk_feature_seed(self, chunk: int) -> int:
        return derive_chunk_seed(self.feature_seed, chunk)

    def chunk_init_seed(self, chunk: int) -> int:
        return derive_seed(self.init_seed, chunk)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule; identical for every chunk."""

    epochs: int
    batch_size: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ValueError("epochs, batch_size and workers must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def adam(self) -> AdamParams:
        return AdamParams(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps)


@dataclass
class ChunkEnsemble:
    """The trained engine: a codebook config plus one model per chunk."""

    code_config: CodeConfig
    engine: EngineConfig
    models: list[ChunkModel] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.models) != self.code_config.num_chunks:
            raise ValueError("one model per chunk required")
        for m in self.models:
            if (
                m.input_dim != self.engine.feature_dim
                or m.hidden_dim != self.engine.hidden_dim
                or m.output_dim != self.code_config.buckets_per_chunk
            ):
                raise ValueError(f"chunk {m.chunk}: model dims disagree with config")


@dataclass
class TrainResult:
    ensemble: ChunkEnsemble
    loss_curves: list[list[float]]  # per chunk, one mean loss per epoch
    skipped_unlabeled: int
    chunk_seconds: list[float]


def or_target(cb: LabelCodebook, labels: np.ndarray, chunk: int) -> TargetVector:
    """Few-hot target for one chunk: the union of the labels' buckets there."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("or_target needs at least one label")
    if labels.min() < 0 or labels.max() >= cb.config.num_labels:
        raise ValueError("label id out of range")
    hot = np.unique(cb.codes[labels, chunk].astype(np.int64))
    return TargetVector(chunk=chunk, hot_buckets=hot)


def split_labeled(documents: list[Document]) -> tuple[list[Document], int]:
    """Drop documents without labels; they cannot produce a target."""
    kept = [d for d in documents if d.labels.size > 0]
    return kept, len(documents) - len(kept)


def _chunk_matrix(
    documents: list[Document], chunk_seed: int, feature_dim: int, mode: FeatureMode
) -> sp.csr_matrix:
    """Hash every document for one chunk into a CSR matrix of inputs."""
    rows = []
    cols = []
    vals = []
    for r, doc in enumerate(documents):
        if doc.num_tokens == 0:
            continue
        idx = hash_token_ids(doc.token_ids, chunk_seed, feature_dim)
        rows.append(np.full(idx.size, r, dtype=np.int64))
        cols.append(idx)
        vals.append(doc.token_counts.astype(np.float64))
    if rows:
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(documents), feature_dim),
        )
    else:
        mat = sp.csr_matrix((len(documents), feature_dim), dtype=np.float64)
    if mode == "binary":
        mat.data = np.minimum(mat.data, 1.0)
    return mat


def _batch_step(
    model: ChunkModel, x_batch: sp.csr_matrix, y_batch: np.ndarray
) -> tuple[float, Gradients]:
    """Mean-over-batch loss and gradients, accumulated in a fixed order."""
    n = x_batch.shape[0]
    h_pre = x_batch @ model.W1.T + model.b1
    h = np.maximum(h_pre, 0.0)
    p = expit(h @ model.W2.T + model.b2)
    pc = np.clip(p, LOSS_CLAMP_EPS, 1.0 - LOSS_CLAMP_EPS)
    loss = float(
        -np.mean(y_batch * np.log(pc) + (1.0 - y_batch) * np.log1p(-pc))
    )
    dz = (p - y_batch) / (model.output_dim * n)
    g_W2 = dz.T @ h
    g_b2 = dz.sum(axis=0)
    dh = dz @ model.W2
    dh[h_pre <= 0.0] = 0.0
    g_W1 = (x_batch.T @ dh).T
    g_b1 = dh.sum(axis=0)
    return loss, Gradients(W1=np.ascontiguousarray(g_W1), b1=g_b1, W2=g_W2, b2=g_b2)


def train_chunk(
    chunk: int,
    documents: list[Document],
    cb: LabelCodebook,
    engine: EngineConfig,
    cfg: TrainConfig,
) -> tuple[ChunkModel, list[float]]:
    """Train one chunk's model; touches no other chunk's state.

    Deterministic given (documents, configs, chunk): initialization, shuffle
    order, and batch accumulation order are all seed-derived and sequential.
    """
    labeled, skipped = split_labeled(documents)
    if skipped:
        logger.warning("chunk %d: skipped %d unlabeled documents", chunk, skipped)
    if not labeled:
        raise ValueError("no labeled documents to train on")

    b = cb.config.buckets_per_chunk
    x_all = _chunk_matrix(
        labeled, engine.chunk_feature_seed(chunk), engine.feature_dim, engine.feature_mode
    )
    hots = [or_target(cb, doc.labels, chunk).hot_buckets for doc in labeled]

    model = init_model(
        engine.feature_dim, engine.hidden_dim, b, engine.chunk_init_seed(chunk), chunk
    )
    state = zero_adam_state(model)
    hyper = cfg.adam()

    n = len(labeled)
    curve = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = np.random.Generator(
            np.random.PCG64(derive_seed(cfg.shuffle_seed, chunk, epoch))
        ).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            x_batch = x_all[batch]
            y_batch = np.zeros((batch.size, b))
            for row, doc_i in enumerate(batch):
                y_batch[row, hots[doc_i]] = 1.0
            loss, grads = _batch_step(model, x_batch, y_batch)
            apply_update(model, grads, state, hyper)
            epoch_loss += loss * batch.size
        mean_loss = epoch_loss / n
        curve.append(mean_loss)
        logger.info(
            "chunk %d epoch %d loss %.6f (%.2fs)",
            chunk,
            epoch,
            mean_loss,
            time.perf_counter() - t0,
        )
    return quantize_to_f32(model), curve


def _train_chunk_task(
    payload: tuple[int, list[Document], CodeConfig, EngineConfig, TrainConfig],
) -> tuple[int, ChunkModel, list[float], float]:
    """Process-pool entry point; rebuilds the codebook from its config."""
    chunk, documents, code_config, engine, cfg = payload
    t0 = time.perf_counter()
    cb = build_codebook(code_config)
    model, curve = train_chunk(chunk, documents, cb, engine, cfg)
    return chunk, model, curve, time.perf_counter() - t0


def train_all(
    documents: list[Document],
    cb: LabelCodebook,
    engine: EngineConfig,
    cfg: TrainConfig,
) -> TrainResult:
    """Train all chunks with zero shared mutable state.

    ``cfg.workers`` chunks run concurrently in separate processes; results
    are bit-identical to the serial run because every chunk executes the same
    sequential code path either way.
    """
    labeled, skipped = split_labeled(documents)
    if skipped:
        logger.warning("skipped %d unlabeled documents", skipped)
    if not labeled:
        raise ValueError("no labeled documents to train on")

    k = cb.config.num_chunks
    payloads = [(chunk, labeled, cb.config, engine, cfg) for chunk in range(k)]
    results: list[tuple[int, ChunkModel, list[float], float]] = []
    if cfg.workers == 1 or k == 1:
        for payload in payloads:
            results.append(_train_chunk_task(payload))
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, k)) as pool:
            results = list(pool.map(_train_chunk_task, payloads))

    results.sort(key=lambda r: r[0])
    ensemble = ChunkEnsemble(
        code_config=cb.config, engine=engine, models=[r[1] for r in results]
    )
    return TrainResult(
        ensemble=ensemble,
        loss_curves=[r[2] for r in results],
        skipped_unlabeled=skipped,
        chunk_seconds=[r[3] for r in results],
    )
