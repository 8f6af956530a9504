"""Frozen-backbone probes.

All probes consume latents produced by model.represent (or raw embedding
matrices, for baselines) and never touch backbone parameters. Three heads:

  linear     cross-entropy on the mean over segment latents (CLS excluded)
  attentive  one transformer block over (CLS + segment latents) with padding
             masked, classifier on the post-block CLS row, lr x0.9 per epoch
  regression linear head on the pooled mean, mean-squared-error objective

Accuracy is reported as exact integer counts plus their single-division
fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import model as md
from .errors import ConfigError, ContractError
from .training import adamw_init, adamw_step

_KIND_DEFAULTS = {
    # kind: (lr, epochs)
    "linear": (1e-4, 30),
    "attentive": (1e-3, 20),
    "regression": (1e-4, 30),
}


@dataclass
class ProbeConfig:
    kind: str
    num_classes: int = 2
    lr: float | None = None
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    epochs: int | None = None
    lr_gamma: float = 0.9   # per-epoch decay, attentive head only
    num_heads: int = 8
    mlp_ratio: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_DEFAULTS:
            raise ConfigError(f"unknown probe kind '{self.kind}'")
        default_lr, default_epochs = _KIND_DEFAULTS[self.kind]
        if self.lr is None:
            self.lr = default_lr
        if self.epochs is None:
            self.epochs = default_epochs
        if self.kind != "regression" and self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2 for classification")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")


# ---------------------------------------------------------------------------
# feature plumbing
# ---------------------------------------------------------------------------


def compute_latents(state: md.ModelState, sequences) -> list[np.ndarray]:
    """Frozen represent() outputs, one (N+1) x d_model matrix per sequence."""
    return [md.represent(state, seq.embeddings) for seq in sequences]


def pool_latents(latents: Sequence[np.ndarray], cls_row: bool = True) -> np.ndarray:
    """Mean over segment rows; cls_row=True drops row 0 (the CLS latent).

    Pass cls_row=False for raw embedding matrices that have no CLS row.
    """
    pooled = []
    for m in latents:
        rows = m[1:] if cls_row else m
        if rows.shape[0] == 0:
            raise ContractError("pool_latents: no segment rows to pool")
        pooled.append(rows.mean(axis=0))
    return np.stack(pooled).astype(np.float32)


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ContractError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size == 0:
        raise ContractError("cannot train a probe on zero examples")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ContractError(
            f"labels outside [0, {num_classes}): found {int(labels.min())}..{int(labels.max())}"
        )
    return labels


def cross_entropy(logits: ad.Tensor, labels: np.ndarray) -> ad.Tensor:
    """Mean cross-entropy; labels are integer class ids."""
    b, c = logits.shape
    shift = ad.Tensor(logits.data.max(axis=1, keepdims=True).copy())  # constant shift
    shifted = logits - shift
    lse = ad.log(ad.exp(shifted).sum(axis=1))
    flat = ad.reshape(shifted, (b * c, 1))
    picked = ad.reshape(ad.take_rows(flat, np.arange(b) * c + labels), (b,))
    return (lse - picked).mean()


# ---------------------------------------------------------------------------
# linear probe
# ---------------------------------------------------------------------------


@dataclass
class LinearHead:
    w: ad.Tensor
    b: ad.Tensor

    def logits(self, x: np.ndarray) -> ad.Tensor:
        return ad.dense_affine(ad.Tensor(x.astype(np.float32)), self.w, self.b)


def train_linear_probe(features: np.ndarray, labels: np.ndarray, cfg: ProbeConfig) -> LinearHead:
    if cfg.kind != "linear":
        raise ConfigError(f"train_linear_probe got kind '{cfg.kind}'")
    labels = _check_labels(labels, cfg.num_classes)
    n, d = features.shape
    if labels.shape[0] != n:
        raise ContractError(f"{n} feature rows vs {labels.shape[0]} labels")
    head = LinearHead(
        w=ad.Tensor(np.zeros((d, cfg.num_classes), np.float32), requires_grad=True),
        b=ad.Tensor(np.zeros(cfg.num_classes, np.float32), requires_grad=True),
    )
    params = {"head.w": head.w, "head.b": head.b}
    opt = adamw_init(params)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = cross_entropy(head.logits(features[idx]), labels[idx])
            for p in params.values():
                p.zero_grad()
            loss.backward()
            adamw_step(params, opt, cfg.lr, weight_decay=0.0, betas=cfg.betas)
    return head


def eval_linear_probe(head: LinearHead, features: np.ndarray, labels: np.ndarray) -> dict:
    labels = np.asarray(labels, dtype=np.int64)
    pred = head.logits(features).data.argmax(axis=1)
    correct = int((pred == labels).sum())
    total = int(labels.shape[0])
    return {"correct": correct, "total": total, "accuracy": correct / total}


# ---------------------------------------------------------------------------
# attentive probe
# ---------------------------------------------------------------------------


@dataclass
class AttentiveHead:
    params: dict[str, ad.Tensor]
    num_heads: int
    eps: float = 1e-6

    def logits(self, latents: Sequence[np.ndarray]) -> ad.Tensor:
        x_np, keep = _pad_latents(latents)
        x = ad.Tensor(x_np)
        h = md._encoder_block(x, keep, self.params, "probe.0", self.num_heads, self.eps)
        cls = ad.reshape(ad.slice_axis(h, 1, 0, 1), (len(latents), x_np.shape[2]))
        return ad.dense_affine(cls, self.params["probe.cls.w"], self.params["probe.cls.b"])


def _pad_latents(latents: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    if not latents:
        raise ContractError("empty latent list")
    d = latents[0].shape[1]
    lens = [m.shape[0] for m in latents]
    l_max = max(lens)
    x = np.zeros((len(latents), l_max, d), dtype=np.float32)
    keep = np.zeros((len(latents), l_max), dtype=bool)
    for i, m in enumerate(latents):
        x[i, : m.shape[0]] = m
        keep[i, : m.shape[0]] = True
    return x, keep


def init_attentive_head(d_model: int, cfg: ProbeConfig, rng: np.random.Generator) -> AttentiveHead:
    if d_model % cfg.num_heads:
        raise ConfigError(f"d_model {d_model} not divisible by probe num_heads {cfg.num_heads}")
    params: dict[str, ad.Tensor] = {}
    for name, shape in md._block_spec("probe.0", d_model, cfg.mlp_ratio):
        if name.endswith(".gain"):
            value = np.ones(shape, np.float32)
        elif name.endswith((".bias", ".bq", ".bv", ".bo", ".b1", ".b2")):
            value = np.zeros(shape, np.float32)
        else:
            value = (0.02 * rng.standard_normal(shape)).astype(np.float32)
        params[name] = ad.Tensor(value, requires_grad=True)
    # classifier starts at zero: an untrained probe predicts class 0 uniformly
    params["probe.cls.w"] = ad.Tensor(np.zeros((d_model, cfg.num_classes), np.float32), requires_grad=True)
    params["probe.cls.b"] = ad.Tensor(np.zeros(cfg.num_classes, np.float32), requires_grad=True)
    return AttentiveHead(params=params, num_heads=cfg.num_heads)


def train_attentive_probe(
    latents: Sequence[np.ndarray], labels: np.ndarray, cfg: ProbeConfig
) -> AttentiveHead:
    if cfg.kind != "attentive":
        raise ConfigError(f"train_attentive_probe got kind '{cfg.kind}'")
    labels = _check_labels(labels, cfg.num_classes)
    if len(latents) != labels.shape[0]:
        raise ContractError(f"{len(latents)} latent matrices vs {labels.shape[0]} labels")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    head = init_attentive_head(latents[0].shape[1], cfg, rng)
    opt = adamw_init(head.params)
    n = len(latents)
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_gamma**epoch
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = cross_entropy(head.logits([latents[i] for i in idx]), labels[idx])
            for p in head.params.values():
                p.zero_grad()
            loss.backward()
            adamw_step(head.params, opt, lr, weight_decay=0.0, betas=cfg.betas)
    return head


def eval_attentive_probe(head: AttentiveHead, latents: Sequence[np.ndarray], labels: np.ndarray) -> dict:
    labels = np.asarray(labels, dtype=np.int64)
    pred = head.logits(latents).data.argmax(axis=1)
    correct = int((pred == labels).sum())
    total = int(labels.shape[0])
    return {"correct": correct, "total": total, "accuracy": correct / total}


# ---------------------------------------------------------------------------
# regression probe
# ---------------------------------------------------------------------------


def train_regression_probe(features: np.ndarray, targets: np.ndarray, cfg: ProbeConfig) -> LinearHead:
    if cfg.kind != "regression":
        raise ConfigError(f"train_regression_probe got kind '{cfg.kind}'")
    targets = np.asarray(targets, dtype=np.float32)
    if not np.isfinite(targets).all():
        raise ContractError("regression targets must be finite")
    n, d = features.shape
    if targets.shape != (n,):
        raise ContractError(f"targets must be ({n},), got {targets.shape}")
    head = LinearHead(
        w=ad.Tensor(np.zeros((d, 1), np.float32), requires_grad=True),
        b=ad.Tensor(np.zeros(1, np.float32), requires_grad=True),
    )
    params = {"head.w": head.w, "head.b": head.b}
    opt = adamw_init(params)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = ad.reshape(head.logits(features[idx]), (len(idx),))
            diff = pred - ad.Tensor(targets[idx])
            loss = (diff * diff).mean()
            for p in params.values():
                p.zero_grad()
            loss.backward()
            adamw_step(params, opt, cfg.lr, weight_decay=0.0, betas=cfg.betas)
    return head


def eval_regression_probe(head: LinearHead, features: np.ndarray, targets: np.ndarray) -> dict:
    pred = head.logits(features).data.reshape(-1).astype(np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    return {"mse": float(np.mean((pred - targets) ** 2))}
