from __future__ import annotations

import math

import numpy as np
import pytest

from seqmae import corpus as cp
from seqmae import masking as mk
from seqmae import model as md
from seqmae.errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    DimMismatchError,
    FormatError,
    TruncatedBlobError,
    VersionMismatchError,
)

TINY = md.ModelConfig(d_model=8, enc_depth=1, dec_depth=1, dec_dim=8, num_heads=2, max_tokens=64)


def _windows(rng, lens, d=8):
    return [
        cp.EmbeddingSequence(video_id=f"v{i}", embeddings=rng.normal(size=(n, d)).astype(np.float32))
        for i, n in enumerate(lens)
    ]


def _forward(state, batch, plans):
    mb = mk.apply_mask(batch, plans)
    z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
    e_hat = md.decode(state, z, mb, batch)
    return mb, z, e_hat


class TestPositionalTable:
    def test_row_zero_interleave(self):
        t = md.positional_table(4, 6)
        np.testing.assert_allclose(t[0], [0, 1, 0, 1, 0, 1], atol=0)

    def test_deterministic(self):
        np.testing.assert_array_equal(md.positional_table(16, 8), md.positional_table(16, 8))

    def test_row_three_dim_four_hand_values(self):
        t = md.positional_table(8, 4)
        expected = [math.sin(3.0), math.cos(3.0), math.sin(3e-2), math.cos(3e-2)]
        np.testing.assert_allclose(t[3], expected, atol=1e-6)

    def test_odd_dim_rejected(self):
        with pytest.raises(ContractError):
            md.positional_table(8, 5)


class TestConfig:
    def test_default_decoder_dim_is_half_with_floor(self):
        assert md.ModelConfig(d_model=128).dec_dim == 64
        assert md.ModelConfig(d_model=48, num_heads=8).dec_dim == 32  # min rule

    def test_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            md.ModelConfig(d_model=10, num_heads=4)
        with pytest.raises(ConfigError):
            md.ModelConfig(d_model=8, num_heads=2, dec_dim=9)

    def test_init_std_must_be_positive(self):
        with pytest.raises(ConfigError):
            md.ModelConfig(d_model=8, num_heads=2, init_std=0.0)
        with pytest.raises(ConfigError):
            md.ModelConfig(d_model=8, num_heads=2, init_std=-0.02)

    def test_init_std_scales_weights_only(self):
        wide = md.ModelConfig(
            d_model=64, enc_depth=1, dec_depth=1, dec_dim=64, num_heads=2, init_std=0.08
        )
        state = md.init_state(wide, seed=3)
        w = state.params["enc.0.attn.wq"].data
        assert abs(float(w.std()) - 0.08) < 0.01
        np.testing.assert_array_equal(state.params["enc.0.attn.bq"].data, 0.0)
        np.testing.assert_array_equal(state.params["enc.0.norm1.gain"].data, 1.0)

    def test_init_std_round_trips_through_checkpoint(self, tmp_path):
        cfg = md.ModelConfig(d_model=8, enc_depth=1, dec_depth=1, dec_dim=8, num_heads=2, init_std=0.05)
        state = md.init_state(cfg, seed=0)
        path = tmp_path / "m.ckpt"
        md.save_checkpoint(state, path)
        loaded = md.load_checkpoint(path)
        assert loaded.config.init_std == 0.05

    def test_param_count_pure_function_of_config(self):
        a = md.init_state(TINY, seed=1)
        b = md.init_state(TINY, seed=2)
        assert [(n, p.shape) for n, p in a.params.items()] == [
            (n, p.shape) for n, p in b.params.items()
        ]
        assert md.state_digest(a) != md.state_digest(b)

    def test_no_decay_partition(self):
        state = md.init_state(TINY, seed=0)
        no_decay = {n for n in state.params if md.is_no_decay(n)}
        assert "cls_token" in no_decay and "mask_token" in no_decay
        assert all(".norm" in n for n in no_decay - {"cls_token", "mask_token"})
        assert "enc.0.attn.wq" not in no_decay and "out.w" not in no_decay


class TestShapeLaws:
    def test_latent_and_reconstruction_shapes_full_sweep(self, rng):
        state = md.init_state(TINY, seed=0)
        for n in list(range(2, 17)) + [24, 33, 48, 64]:
            for ratio in np.arange(0.1, 0.95, 0.1):
                batch, _ = cp.build_batch(_windows(rng, [n]), max_tokens=64)
                plan = mk.random_mask(n, float(ratio), rng)
                mb, z, e_hat = _forward(state, batch, [plan])
                n_vis = n - plan.n_masked
                assert z.shape == (1, n_vis + 1, 8)
                assert e_hat.shape == (1, n, 8)

    def test_mixed_length_batch_shapes(self, rng):
        state = md.init_state(TINY, seed=0)
        lens = [3, 9, 5]
        batch, _ = cp.build_batch(_windows(rng, lens), max_tokens=64)
        plans = [mk.random_mask(n, 0.5, rng) for n in lens]
        mb, z, e_hat = _forward(state, batch, plans)
        assert e_hat.shape == (3, 9, 8)
        assert z.shape[1] == max(int(v) for v in mb.n_visible) + 1

    def test_encoder_token_counter_tracks_visible_only(self, rng):
        state = md.init_state(TINY, seed=0)
        lens = [10, 20]
        batch, _ = cp.build_batch(_windows(rng, lens), max_tokens=64)
        plans = [mk.random_mask(n, 0.4, rng) for n in lens]
        before = state.counters["encoder_tokens"]
        _forward(state, batch, plans)
        seen = state.counters["encoder_tokens"] - before
        expected = sum(n - mk.mask_count(n, 0.4) + 1 for n in lens)
        assert seen == expected
        assert expected == sum(math.ceil(0.6 * n) + 1 for n in lens)

    def test_empty_visible_set_rejected(self, rng):
        state = md.init_state(TINY, seed=0)
        with pytest.raises(ContractError):
            md.encode(
                state,
                np.zeros((1, 2, 8), np.float32),
                np.zeros((1, 2), np.int64),
                np.zeros((1, 2), bool),
            )

    def test_decode_rejects_plan_past_real_len(self, rng):
        state = md.init_state(TINY, seed=0)
        batch, _ = cp.build_batch(_windows(rng, [4, 6]), max_tokens=64)
        plans = [mk.random_mask(4, 0.5, rng), mk.random_mask(6, 0.5, rng)]
        mb = mk.apply_mask(batch, plans)
        z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
        mb.visible_positions[0, 0] = 5  # past real_len[0] == 4
        with pytest.raises(ContractError):
            md.decode(state, z, mb, batch)


class TestPaddingInvariance:
    def test_pad_content_cannot_reach_real_outputs(self, rng):
        state = md.init_state(TINY, seed=3)
        lens = [4, 7, 5]
        batch, _ = cp.build_batch(_windows(rng, lens), max_tokens=64)
        plans = [mk.random_mask(n, 0.5, rng) for n in lens]
        mb, z, e_hat = _forward(state, batch, plans)

        # poison every pad slot and every ragged-visible filler slot
        poisoned = cp.Batch(
            tokens=batch.tokens.copy(),
            attn_keep=batch.attn_keep,
            positions=batch.positions,
            real_len=batch.real_len,
        )
        for i, n in enumerate(lens):
            poisoned.tokens[i, n:] = rng.normal(size=(batch.tokens.shape[1] - n, 8)) * 50
        mb2 = mk.apply_mask(poisoned, plans)
        for i in range(3):
            nv = int(mb2.n_visible[i])
            mb2.visible_tokens[i, nv:] = rng.normal(size=(mb2.visible_tokens.shape[1] - nv, 8)) * 50
        z2 = md.encode(state, mb2.visible_tokens, mb2.visible_positions, mb2.visible_keep)
        e_hat2 = md.decode(state, z2, mb2, poisoned)

        for i, n in enumerate(lens):
            nv = int(mb.n_visible[i])
            np.testing.assert_allclose(z.data[i, : nv + 1], z2.data[i, : nv + 1], atol=1e-6)
            np.testing.assert_allclose(e_hat.data[i, :n], e_hat2.data[i, :n], atol=1e-6)

    def test_appending_extra_pad_slots(self, rng):
        state = md.init_state(TINY, seed=3)
        n = 6
        seqs = _windows(rng, [n])
        batch, _ = cp.build_batch(seqs, max_tokens=64)
        plan = mk.random_mask(n, 0.5, rng)
        _, z, e_hat = _forward(state, batch, [plan])

        grown = cp.Batch(
            tokens=np.concatenate([batch.tokens, np.zeros((1, 4, 8), np.float32)], axis=1),
            attn_keep=np.concatenate([batch.attn_keep, np.zeros((1, 4), bool)], axis=1),
            positions=np.concatenate(
                [batch.positions, np.arange(n, n + 4, dtype=np.int64)[None, :]], axis=1
            ),
            real_len=batch.real_len,
        )
        _, z2, e_hat2 = _forward(state, grown, [plan])
        np.testing.assert_allclose(e_hat.data[0, :n], e_hat2.data[0, :n], atol=1e-6)
        np.testing.assert_allclose(z.data[0], z2.data[0], atol=1e-6)


class TestDecoderStructure:
    def test_identity_when_depth_zero(self, rng):
        cfg = md.ModelConfig(d_model=8, enc_depth=0, dec_depth=0, dec_dim=8, num_heads=2, max_tokens=32)
        state = md.init_state(cfg, seed=0)
        n = 5
        emb = rng.normal(size=(n, 8)).astype(np.float32)
        z = md.encode(
            state, emb[None], np.arange(n, dtype=np.int64)[None], np.ones((1, n), bool)
        )
        # encoder is the identity: latent rows equal the assembled inputs
        np.testing.assert_array_equal(z.data[0, 0], state.params["cls_token"].data)
        np.testing.assert_allclose(z.data[0, 1:], emb + state.enc_pos[:n], rtol=1e-6)

    def test_masked_slots_identical_under_zeroed_positions(self, rng):
        state = md.init_state(TINY, seed=5)
        state.dec_pos = np.zeros_like(state.dec_pos)  # test hook
        n = 8
        batch, _ = cp.build_batch(_windows(rng, [n]), max_tokens=64)
        plan = mk.random_mask(n, 0.5, rng)
        _, _, e_hat = _forward(state, batch, [plan])
        masked_rows = e_hat.data[0, plan.masked_idx]
        for row in masked_rows[1:]:
            np.testing.assert_allclose(row, masked_rows[0], atol=1e-6)

    def test_mask_token_receives_gradient(self, rng):
        state = md.init_state(TINY, seed=0)
        n = 6
        batch, _ = cp.build_batch(_windows(rng, [n]), max_tokens=64)
        plan = mk.random_mask(n, 0.5, rng)
        mb, z, e_hat = _forward(state, batch, [plan])
        from seqmae import autodiff as ad

        loss = ad.take_rows(
            ad.reshape(e_hat, (n, 8)), plan.masked_idx
        ).sum()
        loss.backward()
        g = state.params["mask_token"].grad
        assert g is not None and np.abs(g).max() > 0

    def test_pad_slots_never_get_gradient(self, rng):
        # gradient through pad slots must be exactly zero: the mask token
        # gradient from a batch with pads equals the one without
        state = md.init_state(TINY, seed=0)
        from seqmae import autodiff as ad

        n = 5
        win = _windows(rng, [n])
        plan = mk.random_mask(n, 0.4, rng)

        def grad_of(batch):
            state.zero_grads()
            mb = mk.apply_mask(batch, [plan])
            z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
            e_hat = md.decode(state, z, mb, batch)
            loss = ad.take_rows(ad.reshape(e_hat, (e_hat.shape[1], 8)), plan.masked_idx).sum()
            loss.backward()
            return state.params["mask_token"].grad.copy()

        plain, _ = cp.build_batch(win, max_tokens=64)
        padded = cp.Batch(
            tokens=np.concatenate([plain.tokens, rng.normal(size=(1, 3, 8)).astype(np.float32)], axis=1),
            attn_keep=np.concatenate([plain.attn_keep, np.zeros((1, 3), bool)], axis=1),
            positions=np.concatenate([plain.positions, np.arange(n, n + 3)[None, :]], axis=1),
            real_len=plain.real_len,
        )
        np.testing.assert_allclose(grad_of(plain), grad_of(padded), atol=1e-6)


class TestRepresent:
    def test_shape_and_determinism(self, rng):
        state = md.init_state(TINY, seed=1)
        emb = rng.normal(size=(9, 8)).astype(np.float32)
        a = md.represent(state, emb)
        b = md.represent(state, emb)
        assert a.shape == (10, 8)
        np.testing.assert_array_equal(a.view(np.uint32), b.view(np.uint32))

    def test_truncation_with_counter(self, rng):
        cfg = md.ModelConfig(d_model=8, enc_depth=1, dec_depth=1, dec_dim=8, num_heads=2, max_tokens=6)
        state = md.init_state(cfg, seed=1)
        emb = rng.normal(size=(11, 8)).astype(np.float32)
        before = state.counters["represent_truncations"]
        out = md.represent(state, emb)
        assert out.shape == (7, 8)
        assert state.counters["represent_truncations"] == before + 1
        # truncation keeps the head of the sequence
        np.testing.assert_array_equal(out, md.represent(state, emb[:6]))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        state = md.init_state(TINY, seed=7)
        path = tmp_path / "m.ckpt"
        md.save_checkpoint(state, path)
        loaded = md.load_checkpoint(path)
        assert md.state_digest(loaded) == md.state_digest(state)
        emb = rng.normal(size=(6, 8)).astype(np.float32)
        np.testing.assert_array_equal(
            md.represent(state, emb).view(np.uint32),
            md.represent(loaded, emb).view(np.uint32),
        )

    def test_expected_config_dim_mismatch(self, tmp_path):
        state = md.init_state(TINY, seed=0)
        path = tmp_path / "m.ckpt"
        md.save_checkpoint(state, path)
        other = md.ModelConfig(d_model=16, enc_depth=1, dec_depth=1, dec_dim=8, num_heads=2)
        with pytest.raises(DimMismatchError):
            md.load_checkpoint(path, expect=other)

    def test_expected_config_other_mismatch(self, tmp_path):
        state = md.init_state(TINY, seed=0)
        path = tmp_path / "m.ckpt"
        md.save_checkpoint(state, path)
        other = md.ModelConfig(d_model=8, enc_depth=2, dec_depth=1, dec_dim=8, num_heads=2, max_tokens=64)
        with pytest.raises(ConfigError):
            md.load_checkpoint(path, expect=other)

    def test_corrupt_files(self, tmp_path):
        state = md.init_state(TINY, seed=0)
        path = tmp_path / "m.ckpt"
        md.save_checkpoint(state, path)
        raw = path.read_bytes()

        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"XXXXXXXX" + raw[8:])
        with pytest.raises(BadMagicError):
            md.load_checkpoint(bad)

        bad.write_bytes(raw[:-5])
        with pytest.raises(TruncatedBlobError):
            md.load_checkpoint(bad)

        bad.write_bytes(raw + b"\x00\x00")
        with pytest.raises(FormatError):
            md.load_checkpoint(bad)

        wrong_version = raw[:8] + bytes([9]) + raw[9:]
        bad.write_bytes(wrong_version[: len(raw)])
        with pytest.raises(VersionMismatchError):
            md.load_checkpoint(bad)

    def test_float64_state_refuses_to_save(self, tmp_path):
        state = md.init_state(TINY, seed=0, dtype=np.float64)
        with pytest.raises(ContractError):
            md.save_checkpoint(state, tmp_path / "m.ckpt")
