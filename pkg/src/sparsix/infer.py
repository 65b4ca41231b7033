"""Sparse retrieval: top-m bucket selection, candidate lookup, score fusion.

A query is embedded once per chunk (hash, forward pass) to give a K x B
matrix of bucket probabilities.  Keeping only the m highest-probability
buckets per chunk turns the embedding into a candidate generator: the labels
posted in the selected buckets form the candidate set.  Candidates are then
scored with the full probability rows, one bucket per chunk, so setting
m = B reproduces brute-force scoring over every label exactly.

All ties break toward the lower index, both when selecting buckets and when
ranking labels, which keeps every stage reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codes import LabelCodebook
from .features import Document, hash_features
from .index import InvertedIndex, lookup
from .model import forward
from .train import ChunkEnsemble

AGGREGATION_MODES = ("full-vector", "truncated")


@dataclass(frozen=True)
class InferParams:
    """Knobs for one retrieval call."""

    m: int
    top_k: int
    aggregation: str = "full-vector"

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.aggregation not in AGGREGATION_MODES:
            raise ValueError(f"aggregation must be one of {AGGREGATION_MODES}")


@dataclass(frozen=True)
class QuerySparseEmbedding:
    """Per-chunk bucket probabilities plus the surviving top-m bucket ids."""

    probs: np.ndarray  # (K, B) float64
    top_buckets: list[np.ndarray]  # per chunk, ascending bucket ids, size <= m

    def __post_init__(self) -> None:
        if self.probs.ndim != 2:
            raise ValueError("probs must be a (num_chunks, buckets) matrix")
        if len(self.top_buckets) != self.probs.shape[0]:
            raise ValueError("one bucket selection per chunk required")


@dataclass
class OpCounters:
    """Work actually done for one query, for cost accounting."""

    buckets_scored: int = 0  # probability entries computed (K * B)
    candidates_retrieved: int = 0  # posting entries read, with multiplicity
    unique_candidates: int = 0
    scores_summed: int = 0  # (chunk, candidate) additions performed


@dataclass(frozen=True)
class Prediction:
    labels: np.ndarray  # int64, best first
    scores: np.ndarray  # float64, descending
    counters: OpCounters


def sparsify_topm(probs_row: np.ndarray, m: int) -> np.ndarray:
    """Indexes of the m largest entries; ties keep the lower index.

    The surviving indexes are returned in ascending order, since the
    selection is a set: downstream lookups do not care about rank.
    """
    probs_row = np.asarray(probs_row, dtype=np.float64)
    if probs_row.ndim != 1:
        raise ValueError("expected a single chunk's probability row")
    b = probs_row.size
    if not 1 <= m <= b:
        raise ValueError(f"m must be in [1, {b}], got {m}")
    order = np.lexsort((np.arange(b), -probs_row))
    return np.sort(order[:m]).astype(np.int64)


def embed_query(
    ensemble: ChunkEnsemble, doc: Document, m: int
) -> QuerySparseEmbedding:
    """Hash and score the query in every chunk, then keep m buckets each."""
    k = ensemble.code_config.num_chunks
    b = ensemble.code_config.buckets_per_chunk
    probs = np.empty((k, b))
    for chunk in range(k):
        feats = hash_features(
            doc,
            ensemble.engine.chunk_feature_seed(chunk),
            ensemble.engine.feature_dim,
            ensemble.engine.feature_mode,
        )
        probs[chunk] = forward(ensemble.models[chunk], feats)
    tops = [sparsify_topm(probs[chunk], m) for chunk in range(k)]
    return QuerySparseEmbedding(probs=probs, top_buckets=tops)


def retrieve_candidates(
    idx: InvertedIndex, emb: QuerySparseEmbedding, counters: OpCounters
) -> np.ndarray:
    """Union of labels posted in the selected buckets, ascending."""
    postings = []
    for chunk, buckets in enumerate(emb.top_buckets):
        for bucket in buckets.tolist():
            postings.append(lookup(idx, chunk, int(bucket)))
    if postings:
        merged = np.concatenate(postings).astype(np.int64)
    else:
        merged = np.empty(0, dtype=np.int64)
    counters.candidates_retrieved += int(merged.size)
    candidates = np.unique(merged)
    counters.unique_candidates += int(candidates.size)
    return candidates


def aggregate_scores(
    cb: LabelCodebook,
    emb: QuerySparseEmbedding,
    candidates: np.ndarray,
    counters: OpCounters,
    aggregation: str = "full-vector",
) -> np.ndarray:
    """Score candidates by summing their bucket probability in each chunk.

    full-vector mode reads one probability per chunk for every candidate, so
    the score is the exact dot product between the query's probability matrix
    and the candidate's code, independent of which buckets survived top-m.
    truncated mode zeroes contributions from buckets that were pruned.
    """
    if aggregation not in AGGREGATION_MODES:
        raise ValueError(f"aggregation must be one of {AGGREGATION_MODES}")
    candidates = np.asarray(candidates, dtype=np.int64)
    k, b = emb.probs.shape
    if candidates.size == 0:
        return np.empty(0, dtype=np.float64)
    cand_codes = cb.codes[candidates]  # (n, K)
    chunk_ids = np.arange(k)
    per_chunk = emb.probs[chunk_ids[None, :], cand_codes]  # (n, K)
    if aggregation == "truncated":
        selected = np.zeros((k, b), dtype=bool)
        for chunk in range(k):
            selected[chunk, emb.top_buckets[chunk]] = True
        keep = selected[chunk_ids[None, :], cand_codes]
        per_chunk = np.where(keep, per_chunk, 0.0)
        counters.scores_summed += int(keep.sum())
    else:
        counters.scores_summed += int(per_chunk.size)
    return per_chunk.sum(axis=1)


def _rank(labels: np.ndarray, scores: np.ndarray, top_k: int) -> tuple[np.ndarray, np.ndarray]:
    """Sort by descending score, lower label id first on ties, cut to top_k."""
    order = np.lexsort((labels, -scores))[:top_k]
    return labels[order], scores[order]


def predict(
    ensemble: ChunkEnsemble,
    cb: LabelCodebook,
    idx: InvertedIndex,
    doc: Document,
    params: InferParams,
) -> Prediction:
    """Sparse retrieval for one query: embed, prune, look up, fuse, rank."""
    counters = OpCounters()
    emb = embed_query(ensemble, doc, params.m)
    counters.buckets_scored = int(emb.probs.size)
    candidates = retrieve_candidates(idx, emb, counters)
    scores = aggregate_scores(cb, emb, candidates, counters, params.aggregation)
    labels, scores = _rank(candidates, scores, params.top_k)
    return Prediction(labels=labels, scores=scores, counters=counters)


def predict_full(
    ensemble: ChunkEnsemble,
    cb: LabelCodebook,
    doc: Document,
    top_k: int,
) -> Prediction:
    """Brute-force reference: score every label, no pruning, no index."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    counters = OpCounters()
    emb = embed_query(ensemble, doc, ensemble.code_config.buckets_per_chunk)
    counters.buckets_scored = int(emb.probs.size)
    n = cb.config.num_labels
    all_labels = np.arange(n, dtype=np.int64)
    counters.candidates_retrieved = n
    counters.unique_candidates = n
    scores = aggregate_scores(cb, emb, all_labels, counters, "full-vector")
    labels, scores = _rank(all_labels, scores, top_k)
    return Prediction(labels=labels, scores=scores, counters=counters)


# --- cost model -----------------------------------------------------------
#
# Comparison-count estimates for the retrieval stage, after the per-chunk
# probability rows exist.  Logs are base 2.  Expected candidates per bucket
# is N/B, so K chunks times m buckets yields K*m*N/B retrieved entries; each
# is inserted into a top-k heap of the fixed evaluation depth 5, hence the
# log2(5) factor.  The dense baseline scores all N labels at m=B and pushes
# each into the same heap.


def op_count_bound(num_labels: int, buckets: int, chunks: int, m: int) -> float:
    """Expected sparse-path op count: selection + retrieval + heap pushes."""
    if min(num_labels, buckets, chunks, m) < 1:
        raise ValueError("all op-count inputs must be >= 1")
    retrieved = chunks * m * num_labels / buckets
    return buckets * math.log2(m) + retrieved + retrieved * math.log2(5)


def dense_op_count(num_labels: int, m: int, chunks: int) -> float:
    """Brute-force op count: m-sparse dot against every label, plus heap."""
    if min(num_labels, chunks, m) < 1:
        raise ValueError("all op-count inputs must be >= 1")
    return num_labels * m * chunks + num_labels * math.log2(5)
