"""Inverted index tests: partition structure, golden postings, persistence."""
from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsix.codes import CodeConfig, build_codebook
from sparsix.index import (
    build_index,
    bucket_loads,
    load_histogram,
    load_index,
    lookup,
    save_index,
)


def golden_index():
    return build_index(build_codebook(CodeConfig(4, 2, 8, base_seed=42)))


class TestBuildIndex:
    def test_golden_postings(self):
        idx = golden_index()
        # codes: label0=[1,7] label1=[3,3] label2=[6,2] label3=[5,5]
        expected_chunk0 = {1: [0], 3: [1], 5: [3], 6: [2]}
        expected_chunk1 = {2: [2], 3: [1], 5: [3], 7: [0]}
        for bucket in range(8):
            assert lookup(idx, 0, bucket).tolist() == expected_chunk0.get(bucket, [])
            assert lookup(idx, 1, bucket).tolist() == expected_chunk1.get(bucket, [])

    def test_postings_partition_labels(self):
        """Each chunk's buckets partition the label set exactly."""
        cc = CodeConfig(num_labels=300, num_chunks=5, buckets_per_chunk=16, base_seed=9)
        idx = build_index(build_codebook(cc))
        for chunk in range(5):
            seen = np.concatenate([lookup(idx, chunk, b) for b in range(16)])
            assert sorted(seen.tolist()) == list(range(300))

    def test_postings_sorted(self):
        cc = CodeConfig(num_labels=300, num_chunks=3, buckets_per_chunk=8, base_seed=9)
        idx = build_index(build_codebook(cc))
        for chunk in range(3):
            for bucket in range(8):
                post = lookup(idx, chunk, bucket)
                assert np.all(np.diff(post.astype(np.int64)) > 0)

    def test_postings_match_codebook(self):
        cc = CodeConfig(num_labels=120, num_chunks=4, buckets_per_chunk=10, base_seed=4)
        cb = build_codebook(cc)
        idx = build_index(cb)
        for chunk in range(4):
            for bucket in range(10):
                expected = np.flatnonzero(cb.codes[:, chunk] == bucket)
                assert lookup(idx, chunk, bucket).tolist() == expected.tolist()

    @settings(max_examples=20, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=100),
        k=st.integers(min_value=1, max_value=5),
        b=st.integers(min_value=2, max_value=32),
        seed=st.integers(min_value=0, max_value=2**32),
    )
    def test_loads_sum_to_num_labels(self, n, k, b, seed):
        idx = build_index(build_codebook(CodeConfig(n, k, b, seed)))
        for chunk in range(k):
            assert bucket_loads(idx, chunk).sum() == n


class TestLookupErrors:
    def test_bad_chunk(self):
        idx = golden_index()
        with pytest.raises(ValueError):
            lookup(idx, 2, 0)

    def test_bad_bucket(self):
        idx = golden_index()
        with pytest.raises(ValueError):
            lookup(idx, 0, 8)


class TestLoadStatistics:
    def test_histogram_matches_loads(self):
        cc = CodeConfig(num_labels=500, num_chunks=3, buckets_per_chunk=32, base_seed=6)
        idx = build_index(build_codebook(cc))
        for chunk in range(3):
            loads = bucket_loads(idx, chunk)
            hist = load_histogram(idx, chunk)
            assert sum(hist.values()) == 32
            assert sum(load * cnt for load, cnt in hist.items()) == 500
            for load, cnt in hist.items():
                assert int((loads == load).sum()) == cnt

    def test_balanced_at_scale(self):
        """Random assignment keeps the worst bucket near the binomial tail."""
        cc = CodeConfig(num_labels=30000, num_chunks=2, buckets_per_chunk=1000, base_seed=3)
        idx = build_index(build_codebook(cc))
        for chunk in range(2):
            loads = bucket_loads(idx, chunk)
            assert loads.mean() == 30.0
            assert loads.max() <= 60


class TestPersistence:
    def test_round_trip(self):
        cc = CodeConfig(num_labels=200, num_chunks=4, buckets_per_chunk=16, base_seed=12)
        idx = build_index(build_codebook(cc))
        buf = io.BytesIO()
        save_index(idx, buf)
        buf.seek(0)
        back = load_index(buf)
        assert back.config == idx.config
        for chunk in range(4):
            assert np.array_equal(back.offsets[chunk], idx.offsets[chunk])
            assert np.array_equal(back.labels[chunk], idx.labels[chunk])

    def test_truncated_stream_rejected(self):
        idx = golden_index()
        buf = io.BytesIO()
        save_index(idx, buf)
        raw = buf.getvalue()
        with pytest.raises(ValueError):
            load_index(io.BytesIO(raw[: len(raw) - 5]))

    def test_bad_magic_rejected(self):
        idx = golden_index()
        buf = io.BytesIO()
        save_index(idx, buf)
        raw = bytearray(buf.getvalue())
        raw[0] ^= 0xFF
        with pytest.raises(ValueError):
            load_index(io.BytesIO(bytes(raw)))
