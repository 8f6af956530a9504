"""Masked-MSE pre-training.

The loss averages squared reconstruction error over masked slots only; the
optimizer is AdamW with decoupled weight decay (layernorm parameters and the
CLS/mask tokens are never decayed); the schedule is a linear warmup into a
cosine decay. One epoch is one pass over the shuffled videos with one
randomly sampled contiguous window each. RNG use is split into per-purpose
streams (init / data order + windows / masks) so runs are reproducible
bit-for-bit in single-thread mode.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import model as md
from .corpus import Batch, EmbeddingSequence, build_batch, sample_window
from .errors import ConfigError, ContractError, NonFiniteError, TrainingAbortError
from .masking import MaskedBatch, MaskPlan, apply_mask, random_mask, semantic_mask

DEFAULT_RATIOS = {"random": 0.4, "semantic": 0.5}


@dataclass
class PretrainConfig:
    base_lr: float = 1.5e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.95)
    batch_size: int = 16
    warmup_epochs: int = 40
    epochs: int = 150
    max_tokens: int = 256
    segment_len_s: float = 5.0
    mask_strategy: str = "random"
    mask_ratio: float | None = None
    seed: int = 0
    checkpoint_every: int = 0   # 0: final checkpoint only
    window_min: int = 2

    def __post_init__(self):
        if self.mask_strategy not in DEFAULT_RATIOS:
            raise ConfigError(f"unknown mask strategy '{self.mask_strategy}'")
        if self.mask_ratio is None:
            self.mask_ratio = DEFAULT_RATIOS[self.mask_strategy]
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(
                f"need 0 <= warmup_epochs < epochs, got {self.warmup_epochs} / {self.epochs}"
            )
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    lr: float
    wall_time_s: float
    grad_norm: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]

    def write_jsonl(self, path: Path | str) -> None:
        lines = [
            json.dumps(
                {
                    "epoch": e.epoch,
                    "mean_loss": e.mean_loss,
                    "lr": e.lr,
                    "wall_time_s": e.wall_time_s,
                    "grad_norm": e.grad_norm,
                },
                sort_keys=True,
            )
            for e in self.epochs
        ]
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def masked_mse(e_hat: ad.Tensor, mb: MaskedBatch) -> ad.Tensor:
    """Mean over masked slots of the squared L2 reconstruction error.

    loss = (1/|M|) * sum over masked slots of ||e_i - e_hat_i||^2, where M is
    the union of all masked slots in the batch. Only masked rows of e_hat
    are gathered, so reconstructions at visible or pad slots cannot affect
    the value, bit for bit.
    """
    if mb.target_rows.size == 0:
        raise ContractError("masked_mse: empty mask set")
    b, l, d = e_hat.shape
    flat = ad.reshape(e_hat, (b * l, d))
    picked = ad.take_rows(flat, mb.target_seq * l + mb.target_pos)
    diff = picked - ad.Tensor(mb.target_rows.astype(e_hat.dtype))
    n_masked = mb.target_rows.shape[0]
    return (diff * diff).sum() * (1.0 / n_masked)


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------


@dataclass
class AdamWState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def adamw_init(params: dict[str, ad.Tensor]) -> AdamWState:
    return AdamWState(
        step=0,
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
    )


def adamw_step(
    params: dict[str, ad.Tensor],
    opt: AdamWState,
    lr: float,
    weight_decay: float,
    betas: tuple[float, float] = (0.9, 0.95),
    eps: float = 1e-8,
    no_decay=md.is_no_decay,
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Decay multiplies parameters by (1 - lr * wd) before the moment update;
    gradients are never decayed. Moments are bias-corrected by step count.
    """
    b1, b2 = betas
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.isfinite(g).all():
            raise TrainingAbortError(f"non-finite gradient for '{name}' at optimizer step {t}")
        if not no_decay(name) and weight_decay:
            p.data *= 1.0 - lr * weight_decay
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def lr_at(epoch_frac: float, cfg: PretrainConfig) -> float:
    """Linear 0 -> base_lr over warmup, then half-cosine base_lr -> 0."""
    if not 0.0 <= epoch_frac <= cfg.epochs:
        raise ContractError(f"epoch {epoch_frac} outside [0, {cfg.epochs}]")
    if epoch_frac < cfg.warmup_epochs:
        return cfg.base_lr * epoch_frac / cfg.warmup_epochs
    progress = (epoch_frac - cfg.warmup_epochs) / (cfg.epochs - cfg.warmup_epochs)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def make_plan(
    window: EmbeddingSequence, strategy: str, ratio: float, rng: np.random.Generator
) -> MaskPlan:
    if strategy == "random":
        return random_mask(window.n_segments, ratio, rng)
    if strategy == "semantic":
        return semantic_mask(window.embeddings, ratio)
    raise ConfigError(f"unknown mask strategy '{strategy}'")


def _forward_loss(state: md.ModelState, batch, plans) -> tuple[ad.Tensor, MaskedBatch]:
    mb = apply_mask(batch, plans)
    z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
    e_hat = md.decode(state, z, mb, batch)
    return masked_mse(e_hat, mb), mb


def pretrain(
    sequences: list[EmbeddingSequence],
    model_cfg: md.ModelConfig,
    cfg: PretrainConfig,
    out_dir: Path | str | None = None,
) -> tuple[md.ModelState, TrainLog]:
    """Train from scratch on a corpus; returns (state, log).

    If out_dir is given, writes model.ckpt at the end (and every
    checkpoint_every epochs as model_epoch{N}.ckpt) plus trainlog.jsonl.
    """
    if not sequences:
        raise ContractError("pretrain: empty corpus")
    dims = {s.dim for s in sequences}
    if dims != {model_cfg.d_model}:
        raise ContractError(f"pretrain: corpus dims {sorted(dims)} vs model d_model {model_cfg.d_model}")

    root = np.random.SeedSequence(cfg.seed)
    init_ss, data_ss, mask_ss = root.spawn(3)
    state = md.init_state(model_cfg, np.random.default_rng(init_ss))
    data_rng = np.random.default_rng(data_ss)
    mask_rng = np.random.default_rng(mask_ss)
    opt = adamw_init(state.params)
    log = TrainLog()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        order = data_rng.permutation(len(sequences))
        windows = [sample_window(sequences[i], data_rng, cfg.window_min) for i in order]
        groups = [windows[i : i + cfg.batch_size] for i in range(0, len(windows), cfg.batch_size)]
        losses: list[float] = []
        grad_norms: list[float] = []
        for step, group in enumerate(groups):
            batch, _ = build_batch(group, cfg.max_tokens)
            plans = [
                make_plan(w, cfg.mask_strategy, cfg.mask_ratio, mask_rng)
                for w in group
            ]
            batch_id = f"epoch {epoch} step {step}"
            try:
                loss, _ = _forward_loss(state, batch, plans)
                state.zero_grads()
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingAbortError(f"non-finite loss at {batch_id}: {exc}") from exc
            grad_norms.append(ad.global_grad_norm(state.param_list()))
            lr = lr_at(epoch + step / len(groups), cfg)
            adamw_step(state.params, opt, lr, cfg.weight_decay, cfg.betas)
            losses.append(loss.item())
        log.epochs.append(
            EpochStats(
                epoch=epoch,
                mean_loss=float(np.mean(losses)),
                lr=lr_at(float(epoch), cfg),
                wall_time_s=time.monotonic() - t0,
                grad_norm=float(np.mean(grad_norms)),
            )
        )
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            md.save_checkpoint(state, out_dir / f"model_epoch{epoch + 1}.ckpt")

    if out_dir is not None:
        md.save_checkpoint(state, out_dir / "model.ckpt")
        log.write_jsonl(out_dir / "trainlog.jsonl")
    return state, log


# ---------------------------------------------------------------------------
# reconstruction evaluation and reference baselines
# ---------------------------------------------------------------------------


def _eval_plans(
    sequences: list[EmbeddingSequence], strategy: str, ratio: float, seed: int, max_tokens: int
) -> list[MaskPlan]:
    """One deterministic plan per sequence (after max_tokens truncation)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    plans = []
    for seq in sequences:
        emb = seq.embeddings[:max_tokens]
        plans.append(
            make_plan(
                EmbeddingSequence(video_id=seq.video_id, embeddings=emb),
                strategy,
                ratio,
                rng,
            )
        )
    return plans


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    safe = np.maximum(na * nb, 1e-12)
    return (a * b).sum(axis=-1) / safe


def eval_reconstruction(
    state: md.ModelState,
    sequences: list[EmbeddingSequence],
    strategy: str,
    ratio: float,
    seed: int = 0,
    batch_size: int = 16,
) -> dict[str, float]:
    """Masked-slot reconstruction quality on full (untruncated) sequences.

    Returns mean masked loss and the mean cosine between each reconstructed
    masked embedding and its ground-truth row.
    """
    max_tokens = state.config.max_tokens
    plans = _eval_plans(sequences, strategy, ratio, seed, max_tokens)
    total_sq = 0.0
    cosines: list[float] = []
    n_masked = 0
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start : start + batch_size]
        chunk_plans = plans[start : start + batch_size]
        batch, _ = build_batch(chunk, max_tokens)
        mb = apply_mask(batch, chunk_plans)
        z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
        e_hat = md.decode(state, z, mb, batch)
        picked = e_hat.data[mb.target_seq, mb.target_pos]
        diff = picked.astype(np.float64) - mb.target_rows.astype(np.float64)
        total_sq += float((diff * diff).sum())
        cosines.extend(_cosine_rows(picked, mb.target_rows).tolist())
        n_masked += mb.target_rows.shape[0]
    return {
        "mean_loss": total_sq / n_masked,
        "mean_cosine": float(np.mean(cosines)),
        "n_masked": float(n_masked),
    }


def copy_baseline_cosine(
    sequences: list[EmbeddingSequence],
    strategy: str,
    ratio: float,
    seed: int = 0,
    max_tokens: int = 256,
) -> float:
    """Reference predictor: copy the nearest visible row (preceding first).

    Uses the same plan stream as eval_reconstruction, so the two numbers are
    comparable slot for slot.
    """
    plans = _eval_plans(sequences, strategy, ratio, seed, max_tokens)
    cosines: list[float] = []
    for seq, plan in zip(sequences, plans):
        emb = seq.embeddings[:max_tokens]
        n = emb.shape[0]
        visible = np.ones(n, dtype=bool)
        visible[plan.masked_idx] = False
        vis_idx = np.flatnonzero(visible)
        for i in plan.masked_idx:
            prev = vis_idx[vis_idx < i]
            nxt = vis_idx[vis_idx > i]
            src = prev[-1] if prev.size else nxt[0]
            cosines.append(float(_cosine_rows(emb[src], emb[i])))
    return float(np.mean(cosines))


def gradient_fidelity(
    d_model: int = 8,
    enc_depth: int = 2,
    dec_depth: int = 1,
    num_heads: int = 2,
    n_tokens: int = 6,
    ratio: float = 0.5,
    seed: int = 0,
    samples_per_param: int = 4,
    eps: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients
    of the masked reconstruction loss, computed end to end in 64-bit.

    Builds a one-sequence batch by hand so every array is float64; the
    library's corpus path deliberately stays float32. The check runs at a
    generic parameter point (weights rescaled to std 0.3, biases drawn at
    std 0.1) rather than at the training init: at std 0.02 many true
    gradients sit near 1e-10, below what central differences can resolve,
    and a gradient check at a point says nothing more about that point than
    about any other point of the same graph.
    """
    cfg = md.ModelConfig(
        d_model=d_model,
        enc_depth=enc_depth,
        dec_depth=dec_depth,
        dec_dim=d_model,
        num_heads=num_heads,
        max_tokens=max(8, n_tokens),
    )
    init_ss, data_ss, mask_ss, cond_ss = np.random.SeedSequence(seed).spawn(4)
    state = md.init_state(cfg, np.random.default_rng(init_ss), dtype=np.float64)
    cond_rng = np.random.default_rng(cond_ss)
    for name, p in state.params.items():
        if ".norm" in name:
            continue
        if p.data.std() == 0:
            p.data[...] = 0.1 * cond_rng.standard_normal(p.data.shape)
        else:
            p.data *= 0.3 / 0.02
    data_rng = np.random.default_rng(data_ss)
    tokens = data_rng.normal(size=(1, n_tokens, d_model))
    batch = Batch(
        tokens=tokens,
        attn_keep=np.ones((1, n_tokens), dtype=bool),
        positions=np.arange(n_tokens, dtype=np.int64)[None, :],
        real_len=np.array([n_tokens], dtype=np.int64),
    )
    plan = random_mask(n_tokens, ratio, np.random.default_rng(mask_ss))
    mb = apply_mask(batch, [plan])

    def forward() -> ad.Tensor:
        z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
        e_hat = md.decode(state, z, mb, batch)
        return masked_mse(e_hat, mb)

    return ad.finite_difference_check(
        forward, state.param_list(), eps=eps, samples_per_param=samples_per_param, seed=seed
    )
