"""Shared fixtures: one small trained engine reused across test modules."""
from __future__ import annotations

from dataclasses import dataclass

import pytest

from sparsix.codes import CodeConfig, LabelCodebook, build_codebook
from sparsix.corpus import make_separable_corpus
from sparsix.features import Document
from sparsix.index import InvertedIndex, build_index
from sparsix.train import ChunkEnsemble, EngineConfig, TrainConfig, train_all


@dataclass(frozen=True)
class TinyEngine:
    ensemble: ChunkEnsemble
    cb: LabelCodebook
    idx: InvertedIndex
    train_docs: list[Document]
    test_docs: list[Document]
    train_config: TrainConfig


@pytest.fixture(scope="session")
def tiny_engine() -> TinyEngine:
    """Separable 60-label corpus, trained to saturation in under a second."""
    train_docs, test_docs, _ = make_separable_corpus(
        num_labels=60,
        tokens_per_label=5,
        docs_per_label=6,
        tokens_per_doc=3,
        noise_tokens=1,
        noise_vocab=100,
        test_docs_per_label=2,
        seed=17,
    )
    code = CodeConfig(num_labels=60, num_chunks=4, buckets_per_chunk=32, base_seed=5)
    engine = EngineConfig(feature_dim=512, hidden_dim=24, feature_seed=6, init_seed=7)
    cfg = TrainConfig(epochs=15, batch_size=32, lr=5e-3, shuffle_seed=8)
    cb = build_codebook(code)
    result = train_all(train_docs, cb, engine, cfg)
    return TinyEngine(
        ensemble=result.ensemble,
        cb=cb,
        idx=build_index(cb),
        train_docs=train_docs,
        test_docs=test_docs,
        train_config=cfg,
    )
