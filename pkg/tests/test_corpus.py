from __future__ import annotations

import json
import math

import numpy as np
import pytest

from seqmae import corpus as cp
from seqmae.errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    DimMismatchError,
    FormatError,
    TruncatedBlobError,
    VersionMismatchError,
)


def _seq(video_id: str, matrix, **kw) -> cp.EmbeddingSequence:
    return cp.EmbeddingSequence(video_id=video_id, embeddings=matrix, **kw)


class TestSegmentSchedule:
    def test_canonical_two_minute_video(self):
        intervals = cp.segment_schedule(120.0, 5.0)
        assert len(intervals) == 24
        assert intervals[0] == (0.0, 5.0)
        assert intervals[-1] == (115.0, 120.0)

    def test_single_segment(self):
        assert cp.segment_schedule(5.0, 5.0) == [(0.0, 5.0)]

    def test_short_final_interval(self):
        assert cp.segment_schedule(13.0, 5.0) == [(0.0, 5.0), (5.0, 10.0), (10.0, 13.0)]

    def test_count_matches_ceil_oracle(self, rng):
        for _ in range(1000):
            duration = float(rng.uniform(0.1, 500.0))
            seg = float(rng.uniform(0.1, 30.0))
            intervals = cp.segment_schedule(duration, seg)
            assert len(intervals) == math.ceil(duration / seg)
            # consecutive and covering
            assert intervals[0][0] == 0.0
            assert intervals[-1][1] == duration
            for (a0, a1), (b0, b1) in zip(intervals, intervals[1:]):
                assert a1 == b0 and a0 < a1

    def test_non_positive_inputs_rejected(self):
        with pytest.raises(ContractError):
            cp.segment_schedule(0.0, 5.0)
        with pytest.raises(ContractError):
            cp.segment_schedule(10.0, -1.0)


class TestBlobFormat:
    def test_round_trip_bit_exact_with_awkward_floats(self, tmp_path, rng):
        matrix = rng.normal(size=(7, 5)).astype(np.float32)
        matrix[0, 0] = np.float32(-0.0)
        matrix[1, 1] = np.float32(1e-45)   # subnormal
        matrix[2, 2] = np.float32(-1e-44)
        path = tmp_path / "x.lvme"
        cp.write_blob(path, matrix)
        back = cp.read_blob(path)
        assert back.dtype == np.float32
        # bit-level equality, so -0.0 and subnormals must survive
        np.testing.assert_array_equal(matrix.view(np.uint32), back.view(np.uint32))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.lvme"
        p.write_bytes(b"NOTME000" + b"\x00" * 16)
        with pytest.raises(BadMagicError):
            cp.read_blob(p)

    def test_truncated_by_one_byte(self, tmp_path, rng):
        p = tmp_path / "x.lvme"
        cp.write_blob(p, rng.normal(size=(3, 4)).astype(np.float32))
        raw = p.read_bytes()
        p.write_bytes(raw[:-1])
        with pytest.raises(TruncatedBlobError):
            cp.read_blob(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "x.lvme"
        p.write_bytes(cp.BLOB_MAGIC + b"\x01\x00")
        with pytest.raises(TruncatedBlobError):
            cp.read_blob(p)

    def test_version_mismatch(self, tmp_path, rng):
        p = tmp_path / "x.lvme"
        cp.write_blob(p, rng.normal(size=(2, 2)).astype(np.float32))
        raw = bytearray(p.read_bytes())
        raw[8] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            cp.read_blob(p)

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        p = tmp_path / "x.lvme"
        cp.write_blob(p, rng.normal(size=(2, 2)).astype(np.float32))
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            cp.read_blob(p)


class TestCorpusRoundTrip:
    def _corpus(self, rng):
        return [
            _seq(
                f"vid_{i}",
                rng.normal(size=(n, 6)).astype(np.float32),
                caption_ids=[f"c{j}" for j in range(n)],
                labels={"dominant_prototype": i, "has_ab": 1, "ab_order": i % 2},
                encoder_id="enc-test",
            )
            for i, n in enumerate([3, 5, 2])
        ]

    def test_round_trip_bit_exact(self, tmp_path, rng):
        seqs = self._corpus(rng)
        cp.write_corpus(seqs, tmp_path)
        back, manifest = cp.read_corpus(tmp_path)
        assert manifest.embedding_dim == 6
        assert manifest.encoder_id == "enc-test"
        assert [e.video_id for e in manifest.entries] == [s.video_id for s in seqs]
        for orig, got in zip(seqs, back):
            np.testing.assert_array_equal(
                orig.embeddings.view(np.uint32), got.embeddings.view(np.uint32)
            )
            assert got.caption_ids == orig.caption_ids
            assert got.labels == orig.labels
            assert got.segment_len_s == orig.segment_len_s

    def test_mixed_dims_rejected(self, tmp_path, rng):
        seqs = [
            _seq("a", rng.normal(size=(2, 4)).astype(np.float32)),
            _seq("b", rng.normal(size=(2, 5)).astype(np.float32)),
        ]
        with pytest.raises(ContractError):
            cp.write_corpus(seqs, tmp_path)

    def test_duplicate_video_id_rejected(self, tmp_path, rng):
        m = rng.normal(size=(2, 4)).astype(np.float32)
        with pytest.raises(ContractError):
            cp.write_corpus([_seq("a", m), _seq("a", m)], tmp_path)

    def test_manifest_dim_vs_blob_dim(self, tmp_path, rng):
        cp.write_corpus(self._corpus(rng), tmp_path)
        manifest = tmp_path / cp.MANIFEST_NAME
        lines = manifest.read_text().splitlines()
        header = json.loads(lines[0])
        header["embedding_dim"] = 64
        lines[0] = json.dumps(header, sort_keys=True, separators=(",", ":"))
        manifest.write_text("\n".join(lines) + "\n")
        with pytest.raises(DimMismatchError):
            cp.read_corpus(tmp_path)

    def test_missing_blob(self, tmp_path, rng):
        cp.write_corpus(self._corpus(rng), tmp_path)
        (tmp_path / "blobs" / "vid_1.lvme").unlink()
        with pytest.raises(FormatError):
            cp.read_corpus(tmp_path)

    def test_row_count_disagreement(self, tmp_path, rng):
        seqs = self._corpus(rng)
        cp.write_corpus(seqs, tmp_path)
        cp.write_blob(tmp_path / "blobs" / "vid_0.lvme", rng.normal(size=(9, 6)).astype(np.float32))
        with pytest.raises(FormatError):
            cp.read_corpus(tmp_path)

    def test_digest_tracks_content(self, tmp_path, rng):
        seqs = self._corpus(rng)
        cp.write_corpus(seqs, tmp_path)
        d1 = cp.corpus_digest(tmp_path)
        assert d1 == cp.corpus_digest(tmp_path)
        cp.write_blob(tmp_path / "blobs" / "vid_0.lvme", np.zeros((3, 6), dtype=np.float32))
        assert cp.corpus_digest(tmp_path) != d1


class TestSyntheticCorpus:
    CFG = dict(num_prototypes=8, embedding_dim=32, num_videos=40, len_min=6, len_max=14, seed=11)

    def test_determinism_is_byte_level(self, tmp_path):
        a = cp.synth_generate(cp.SynthConfig(**self.CFG))
        b = cp.synth_generate(cp.SynthConfig(**self.CFG))
        cp.write_corpus(a.sequences, tmp_path / "a")
        cp.write_corpus(b.sequences, tmp_path / "b")
        assert cp.corpus_digest(tmp_path / "a") == cp.corpus_digest(tmp_path / "b")

    def test_zero_noise_rows_equal_prototypes_exactly(self):
        out = cp.synth_generate(cp.SynthConfig(**{**self.CFG, "noise_sigma": 0.0}))
        proto_by_id = {cid: out.prototypes[i] for i, cid in enumerate(out.caption_ids)}
        for seq in out.sequences:
            for row, cid in zip(seq.embeddings, seq.caption_ids):
                np.testing.assert_array_equal(
                    row.view(np.uint32), proto_by_id[cid].view(np.uint32)
                )

    def test_rows_unit_norm(self):
        out = cp.synth_generate(cp.SynthConfig(**self.CFG))
        for seq in out.sequences:
            norms = np.linalg.norm(seq.embeddings.astype(np.float64), axis=1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_temporal_coherence_beats_cross_prototype_similarity(self):
        out = cp.synth_generate(cp.SynthConfig(**self.CFG))
        within = []
        for seq in out.sequences:
            e = seq.embeddings.astype(np.float64)
            within.extend(((e[1:] * e[:-1]).sum(axis=1)).tolist())
        protos = out.prototypes.astype(np.float64)
        cross = [
            float(protos[i] @ protos[j])
            for i in range(len(protos))
            for j in range(len(protos))
            if i != j
        ]
        assert np.mean(within) > np.mean(cross) + 0.3

    def test_self_transition_prob_formula(self):
        cfg = cp.SynthConfig(**self.CFG)
        p = cfg.self_transition_prob()
        # softmax over 8 states, logit 1/0.3 on the current one
        bias = math.exp(1.0 / 0.3)
        assert p == pytest.approx(bias / (bias + 7))
        assert 0.75 < p < 0.85

    def test_mirrored_pairs_reverse_caption_order(self):
        out = cp.synth_generate(cp.SynthConfig(**self.CFG))
        by_pair = {}
        for seq in out.sequences:
            by_pair.setdefault(seq.labels["pair_id"], []).append(seq)
        for members in by_pair.values():
            if len(members) != 2:
                continue
            first, second = sorted(members, key=lambda s: s.labels["mirror"])
            assert second.caption_ids == first.caption_ids[::-1]

    def test_labels_match_caption_oracle(self):
        out = cp.synth_generate(cp.SynthConfig(**self.CFG))
        for seq in out.sequences:
            states = [int(c.split("_")[1]) for c in seq.caption_ids]
            counts = np.bincount(states, minlength=8)
            assert seq.labels["dominant_prototype"] == int(counts.argmax())
            has_ab = (0 in states) and (1 in states)
            assert seq.labels["has_ab"] == int(has_ab)
            if has_ab:
                assert seq.labels["ab_order"] == int(states.index(0) < states.index(1))
            else:
                assert seq.labels["ab_order"] == -1

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            cp.SynthConfig(num_prototypes=1)
        with pytest.raises(ConfigError):
            cp.SynthConfig(noise_sigma=-0.1)
        with pytest.raises(ConfigError):
            cp.SynthConfig(len_min=1)

    def test_order_split_is_balanced_and_pair_disjoint(self):
        out = cp.synth_generate(
            cp.SynthConfig(num_prototypes=2, embedding_dim=16, num_videos=120,
                           len_min=4, len_max=10, transition_temperature=0.7, seed=3)
        )
        train, test = cp.order_task_split(out.sequences, train_frac=0.5, seed=0)
        assert not set(train) & set(test)
        for split in (train, test):
            labels = [out.sequences[i].labels["ab_order"] for i in split]
            assert sum(labels) * 2 == len(labels)  # exactly balanced
            pair_ids = [out.sequences[i].labels["pair_id"] for i in split]
            assert all(pair_ids.count(p) == 2 for p in pair_ids)
        # multisets match within every kept pair
        for split in (train, test):
            by_pair = {}
            for i in split:
                by_pair.setdefault(out.sequences[i].labels["pair_id"], []).append(i)
            for a, b in by_pair.values():
                assert sorted(out.sequences[a].caption_ids) == sorted(out.sequences[b].caption_ids)


class TestWindowSampling:
    def test_length_two_always_full(self, rng):
        seq = _seq("v", rng.normal(size=(2, 4)).astype(np.float32))
        for _ in range(20):
            w = cp.sample_window(seq, rng)
            np.testing.assert_array_equal(w.embeddings, seq.embeddings)

    def test_short_sequence_returned_unchanged(self, rng):
        seq = _seq("v", rng.normal(size=(1, 4)).astype(np.float32))
        assert cp.sample_window(seq, rng) is seq

    def test_windows_contiguous_and_in_bounds(self, rng):
        n = 12
        marker = np.repeat(np.arange(n, dtype=np.float32)[:, None], 4, axis=1)
        seq = _seq("v", marker, caption_ids=[f"c{i}" for i in range(n)])
        for _ in range(300):
            w = cp.sample_window(seq, rng)
            ids = w.embeddings[:, 0].astype(int)
            assert 2 <= len(ids) <= n
            assert (np.diff(ids) == 1).all()
            assert 0 <= ids[0] and ids[-1] < n
            assert w.caption_ids == [f"c{i}" for i in ids]

    def test_window_length_distribution_uniform(self, rng):
        pytest.importorskip("scipy")
        from scipy import stats

        seq = _seq("v", rng.normal(size=(10, 4)).astype(np.float32))
        counts = np.zeros(11, dtype=int)
        for _ in range(10_000):
            counts[cp.sample_window(seq, rng).n_segments] += 1
        observed = counts[2:]
        assert observed.sum() == 10_000
        p = stats.chisquare(observed).pvalue
        assert p > 0.001, f"window length distribution not uniform (p={p:.4g})"


class TestBatchAssembly:
    def test_hand_constructed_padding(self, rng):
        w3 = _seq("a", rng.normal(size=(3, 4)).astype(np.float32))
        w5 = _seq("b", rng.normal(size=(5, 4)).astype(np.float32))
        batch, truncated = cp.build_batch([w3, w5], max_tokens=8)
        assert truncated == 0
        assert batch.tokens.shape == (2, 5, 4)
        np.testing.assert_array_equal(batch.attn_keep, [[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]])
        np.testing.assert_array_equal(batch.real_len, [3, 5])
        np.testing.assert_array_equal(batch.positions[0], np.arange(5))

    def test_exact_fit_no_padding(self, rng):
        w = _seq("a", rng.normal(size=(6, 4)).astype(np.float32))
        batch, truncated = cp.build_batch([w], max_tokens=6)
        assert batch.tokens.shape == (1, 6, 4)
        assert batch.attn_keep.all() and truncated == 0

    def test_truncation_from_end_with_counter(self, rng):
        m = rng.normal(size=(10, 4)).astype(np.float32)
        batch, truncated = cp.build_batch([_seq("a", m)], max_tokens=6)
        assert truncated == 1
        assert batch.tokens.shape == (1, 6, 4)
        np.testing.assert_array_equal(batch.tokens[0], m[:6])

    def test_pad_slots_hold_pad_vector(self, rng):
        windows = [
            _seq(f"v{i}", rng.normal(size=(n, 3)).astype(np.float32))
            for i, n in enumerate([2, 7, 4])
        ]
        batch, _ = cp.build_batch(windows, max_tokens=16)
        for b in range(3):
            for i in range(batch.tokens.shape[1]):
                if i >= batch.real_len[b]:
                    assert not batch.attn_keep[b, i]
                    np.testing.assert_array_equal(batch.tokens[b, i], np.zeros(3, np.float32))

    def test_empty_input_rejected(self):
        with pytest.raises(ContractError):
            cp.build_batch([], max_tokens=8)


class TestSequenceValidation:
    def test_caption_count_mismatch(self, rng):
        with pytest.raises(ContractError):
            _seq("v", rng.normal(size=(3, 4)).astype(np.float32), caption_ids=["a"])

    def test_non_finite_rejected(self):
        m = np.zeros((2, 2), dtype=np.float32)
        m[0, 0] = np.nan
        with pytest.raises(ContractError):
            _seq("v", m)

    def test_unit_normalize(self, rng):
        m = rng.normal(size=(5, 8)).astype(np.float32) * 7
        normed = cp.unit_normalize(m)
        np.testing.assert_allclose(np.linalg.norm(normed, axis=1), 1.0, atol=1e-5)
        with pytest.raises(ContractError):
            cp.unit_normalize(np.zeros((1, 4), dtype=np.float32))
