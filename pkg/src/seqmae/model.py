"""The asymmetric masked-embedding autoencoder.

Encoder: pre-layernorm transformer blocks over the visible segment
embeddings plus a learned CLS token (which gets no positional embedding and
is never masked). Decoder: narrower pre-layernorm blocks over the projected
visible latents with a shared learned mask token inserted at every masked
slot, positional embeddings added to both, followed by a projection back to
the embedding dimension. Positional tables are fixed sinusoidal and are
regenerated from the config, never stored in checkpoints.

Padded slots (batch padding and ragged-visible filler) are excluded from
attention outright, so no real-token output depends on pad content.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .corpus import Batch
from .errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    DimMismatchError,
    FormatError,
    TruncatedBlobError,
    VersionMismatchError,
)
from .masking import MaskedBatch

CKPT_MAGIC = b"LVMECKPT"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    d_model: int
    enc_depth: int = 32
    dec_depth: int = 4
    dec_dim: int | None = None
    num_heads: int = 8
    mlp_ratio: int = 4
    max_tokens: int = 256
    ln_eps: float = 1e-6
    init_std: float = 0.02

    def __post_init__(self):
        if self.dec_dim is None:
            self.dec_dim = max(32, self.d_model // 2)
        if self.d_model < 1 or self.d_model % self.num_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.dec_dim < 1 or self.dec_dim % self.num_heads:
            raise ConfigError(f"dec_dim {self.dec_dim} not divisible by num_heads {self.num_heads}")
        # depth 0 builds an identity encoder/decoder stack; useful for
        # ablation and structural tests, not a training configuration
        if self.enc_depth < 0 or self.dec_depth < 0:
            raise ConfigError("depths must be >= 0")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.mlp_ratio < 1:
            raise ConfigError("mlp_ratio must be >= 1")
        if self.ln_eps <= 0:
            raise ConfigError("ln_eps must be positive")
        if self.init_std <= 0:
            raise ConfigError("init_std must be positive")


def _block_spec(prefix: str, dim: int, mlp_ratio: int) -> list[tuple[str, tuple[int, ...]]]:
    hidden = dim * mlp_ratio
    return [
        (f"{prefix}.norm1.gain", (dim,)),
        (f"{prefix}.norm1.bias", (dim,)),
        (f"{prefix}.attn.wq", (dim, dim)),
        (f"{prefix}.attn.bq", (dim,)),
        # no key bias: softmax is invariant to per-query constant score
        # shifts, so a key bias is a flat direction the optimizer and any
        # finite-difference check could never pin down
        (f"{prefix}.attn.wk", (dim, dim)),
        (f"{prefix}.attn.wv", (dim, dim)),
        (f"{prefix}.attn.bv", (dim,)),
        (f"{prefix}.attn.wo", (dim, dim)),
        (f"{prefix}.attn.bo", (dim,)),
        (f"{prefix}.norm2.gain", (dim,)),
        (f"{prefix}.norm2.bias", (dim,)),
        (f"{prefix}.mlp.w1", (dim, hidden)),
        (f"{prefix}.mlp.b1", (hidden,)),
        (f"{prefix}.mlp.w2", (hidden, dim)),
        (f"{prefix}.mlp.b2", (dim,)),
    ]


def param_spec(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Deterministic (name, shape) list; the checkpoint payload order."""
    spec: list[tuple[str, tuple[int, ...]]] = [
        ("cls_token", (cfg.d_model,)),
        ("mask_token", (cfg.dec_dim,)),
    ]
    for i in range(cfg.enc_depth):
        spec.extend(_block_spec(f"enc.{i}", cfg.d_model, cfg.mlp_ratio))
    if cfg.enc_depth > 0:
        spec.append(("enc.norm.gain", (cfg.d_model,)))
        spec.append(("enc.norm.bias", (cfg.d_model,)))
    spec.append(("proj.w", (cfg.d_model, cfg.dec_dim)))
    spec.append(("proj.b", (cfg.dec_dim,)))
    for i in range(cfg.dec_depth):
        spec.extend(_block_spec(f"dec.{i}", cfg.dec_dim, cfg.mlp_ratio))
    if cfg.dec_depth > 0:
        spec.append(("dec.norm.gain", (cfg.dec_dim,)))
        spec.append(("dec.norm.bias", (cfg.dec_dim,)))
    spec.append(("out.w", (cfg.dec_dim, cfg.d_model)))
    spec.append(("out.b", (cfg.d_model,)))
    return spec


def is_no_decay(name: str) -> bool:
    """Layernorm gains/biases and the CLS/mask tokens skip weight decay."""
    return ".norm" in name or name in ("cls_token", "mask_token")


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, ad.Tensor]
    enc_pos: np.ndarray
    dec_pos: np.ndarray
    # throughput instrumentation (diagnostics, excluded from checkpoints):
    # encoder_tokens counts CLS + visible per sequence, proving encoder cost
    # scales with the visible set, not the full sequence
    counters: dict[str, int] = field(default_factory=lambda: {
        "encoder_tokens": 0,
        "decoder_tokens": 0,
        "represent_truncations": 0,
    })

    def param_list(self) -> list[ad.Tensor]:
        return list(self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def positional_table(max_len: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal table, base 10000, interleaved [sin, cos] pairs.

    table[i, 2j]   = sin(i / 10000^(2j/dim))
    table[i, 2j+1] = cos(i / 10000^(2j/dim))
    """
    if dim % 2:
        raise ContractError(f"positional_table needs an even dim, got {dim}")
    if max_len < 1:
        raise ContractError("positional_table needs max_len >= 1")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    j = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * j / dim)
    table = np.empty((max_len, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table.astype(dtype)


def init_state(cfg: ModelConfig, seed: int | np.random.Generator = 0, dtype=np.float32) -> ModelState:
    """Fresh parameters: N(0, init_std) for matrices and tokens, identity norms."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(np.random.SeedSequence(seed))
    params: dict[str, ad.Tensor] = {}
    for name, shape in param_spec(cfg):
        if name.endswith(".gain"):
            value = np.ones(shape)
        elif name.endswith((".bias", ".b", ".bq", ".bv", ".bo", ".b1", ".b2")):
            value = np.zeros(shape)
        else:
            value = cfg.init_std * rng.standard_normal(shape)
        params[name] = ad.Tensor(value.astype(dtype), requires_grad=True, dtype=dtype)
    return ModelState(
        config=cfg,
        params=params,
        enc_pos=positional_table(cfg.max_tokens, cfg.d_model, dtype),
        dec_pos=positional_table(cfg.max_tokens, cfg.dec_dim, dtype),
    )


# ---------------------------------------------------------------------------
# transformer pieces
# ---------------------------------------------------------------------------


def _attention(x: ad.Tensor, keep: np.ndarray, p: dict, prefix: str, num_heads: int) -> ad.Tensor:
    b, l, dim = x.shape
    hd = dim // num_heads
    q = ad.dense_affine(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"])
    k = ad.dense(x, p[f"{prefix}.wk"])
    v = ad.dense_affine(x, p[f"{prefix}.wv"], p[f"{prefix}.bv"])

    def heads(t: ad.Tensor) -> ad.Tensor:
        return ad.transpose(ad.reshape(t, (b, l, num_heads, hd)), (0, 2, 1, 3))

    qh, kh, vh = heads(q), heads(k), heads(v)
    scores = (qh @ ad.transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(hd))
    probs = ad.softmax_masked(scores, keep[:, None, None, :])
    ctx = probs @ vh
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, l, dim))
    return ad.dense_affine(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def _mlp(x: ad.Tensor, p: dict, prefix: str) -> ad.Tensor:
    h = ad.dense_affine(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"])
    return ad.dense_affine(ad.gelu(h), p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def _encoder_block(x: ad.Tensor, keep: np.ndarray, p: dict, prefix: str, num_heads: int, eps: float) -> ad.Tensor:
    h = ad.layer_norm(x, p[f"{prefix}.norm1.gain"], p[f"{prefix}.norm1.bias"], eps)
    x = x + _attention(h, keep, p, f"{prefix}.attn", num_heads)
    h = ad.layer_norm(x, p[f"{prefix}.norm2.gain"], p[f"{prefix}.norm2.bias"], eps)
    return x + _mlp(h, p, f"{prefix}.mlp")


def _run_stack(
    x: ad.Tensor, keep: np.ndarray, p: dict, stack: str, depth: int, num_heads: int, eps: float
) -> ad.Tensor:
    """Blocks then final norm; depth 0 is the identity (no norm either)."""
    for i in range(depth):
        x = _encoder_block(x, keep, p, f"{stack}.{i}", num_heads, eps)
    if depth > 0:
        x = ad.layer_norm(x, p[f"{stack}.norm.gain"], p[f"{stack}.norm.bias"], eps)
    return x


# ---------------------------------------------------------------------------
# encode / decode / represent
# ---------------------------------------------------------------------------


def encode(
    state: ModelState,
    visible_tokens: np.ndarray,
    visible_positions: np.ndarray,
    visible_keep: np.ndarray,
) -> ad.Tensor:
    """Run the encoder over visible tokens; returns B x (Vmax+1) x d_model.

    Row 0 of every sequence is the CLS latent. Filler slots in the ragged
    visible batch stay in the output but are attention-excluded garbage;
    callers drop them via visible_keep.
    """
    b, v_max, d = visible_tokens.shape
    cfg = state.config
    if d != cfg.d_model:
        raise ContractError(f"encode: token dim {d} vs model dim {cfg.d_model}")
    if not visible_keep.any(axis=1).all():
        raise ContractError("encode: a sequence has an empty visible set")
    if visible_positions.max() >= cfg.max_tokens:
        raise ContractError(
            f"encode: position {int(visible_positions.max())} >= max_tokens {cfg.max_tokens}"
        )

    pos = state.enc_pos[visible_positions]  # filler rows get row 0; masked out anyway
    x_np = visible_tokens.astype(state.enc_pos.dtype) + pos
    seg = ad.Tensor(x_np)

    cls = ad.broadcast_to(ad.reshape(state.params["cls_token"], (1, 1, cfg.d_model)), (b, 1, cfg.d_model))
    x = ad.concat([cls, seg], axis=1)
    keep = np.concatenate([np.ones((b, 1), dtype=bool), visible_keep], axis=1)

    state.counters["encoder_tokens"] += int(visible_keep.sum()) + b
    return _run_stack(x, keep, state.params, "enc", cfg.enc_depth, cfg.num_heads, cfg.ln_eps)


def decode(state: ModelState, z: ad.Tensor, mb: MaskedBatch, batch: Batch) -> ad.Tensor:
    """Reconstruct every segment slot; returns B x L x d_model, where L is
    the longest real row in the batch.

    The CLS latent is dropped; visible latents are projected to the decoder
    width and scattered back to their original slots; every other slot
    (masked or pad) receives the shared mask token; positions are added by
    original index; pad slots are attention-excluded so their content is
    irrelevant and gradient-free.
    """
    cfg = state.config
    b, l, _ = batch.tokens.shape
    # trim to the longest real row: pad slots beyond it never enter a kernel,
    # so appending pad columns cannot even change summation order downstream
    t_real = int(batch.real_len.max())
    l = min(l, t_real)
    positions = batch.positions[:, :l]
    attn_keep = batch.attn_keep[:, :l]
    v_max = z.shape[1] - 1
    if z.shape[0] != b:
        raise ContractError(f"decode: latent batch {z.shape[0]} vs token batch {b}")
    for i in range(b):
        nv = int(mb.visible_keep[i].sum())
        if nv and mb.visible_positions[i, :nv].max() >= int(batch.real_len[i]):
            raise ContractError(f"decode: sequence {i} plan indexes past its real length")

    z_seg = ad.slice_axis(z, 1, 1, v_max + 1)
    proj = ad.dense_affine(z_seg, state.params["proj.w"], state.params["proj.b"])
    proj_flat = ad.reshape(proj, (b * v_max, cfg.dec_dim))
    rows = ad.concat([proj_flat, ad.reshape(state.params["mask_token"], (1, cfg.dec_dim))], axis=0)

    # gather index: visible slots point at their projected latent row,
    # masked and pad slots at the shared mask-token row
    index = np.full((b, l), b * v_max, dtype=np.int64)
    for i in range(b):
        nv = int(mb.visible_keep[i].sum())
        index[i, mb.visible_positions[i, :nv]] = i * v_max + np.arange(nv)

    x = ad.reshape(ad.take_rows(rows, index.reshape(-1)), (b, l, cfg.dec_dim))
    pos = state.dec_pos[positions]  # positions added to visible and mask tokens alike
    x = x + ad.Tensor(pos.astype(x.data.dtype))

    state.counters["decoder_tokens"] += int(batch.real_len.sum())
    h = _run_stack(x, attn_keep, state.params, "dec", cfg.dec_depth, cfg.num_heads, cfg.ln_eps)
    return ad.dense_affine(h, state.params["out.w"], state.params["out.b"])


def represent(state: ModelState, embeddings: np.ndarray) -> np.ndarray:
    """Frozen-encoder latents for a full sequence: (N+1) x d_model.

    No masking: the whole sequence is visible. Sequences longer than
    max_tokens are truncated from the end (counted in counters).
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    if embeddings.ndim != 2:
        raise ContractError(f"represent: need (N, d) embeddings, got {embeddings.shape}")
    n = embeddings.shape[0]
    if n > state.config.max_tokens:
        state.counters["represent_truncations"] += 1
        embeddings = embeddings[: state.config.max_tokens]
        n = embeddings.shape[0]
    z = encode(
        state,
        embeddings[None, :, :],
        np.arange(n, dtype=np.int64)[None, :],
        np.ones((1, n), dtype=bool),
    )
    return z.data[0].copy()


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def state_digest(state: ModelState) -> str:
    """sha256 over parameter names, shapes, and exact bytes, in spec order."""
    h = hashlib.sha256()
    for name, _ in param_spec(state.config):
        arr = state.params[name].data
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def save_checkpoint(state: ModelState, path: Path | str) -> None:
    if any(p.dtype != np.dtype(np.float32) for p in state.params.values()):
        raise ContractError("checkpoints are float32-only; this state is not")
    spec = param_spec(state.config)
    header = {
        "config": asdict(state.config),
        "params": [[name, list(shape)] for name, shape in spec],
        "dtype": "float32",
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        np.ascontiguousarray(state.params[name].data).astype("<f4", copy=False).tobytes()
        for name, _ in spec
    )
    out = CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(header_bytes)) + header_bytes + payload
    Path(path).write_bytes(out)


def load_checkpoint(path: Path | str, expect: ModelConfig | None = None) -> ModelState:
    raw = Path(path).read_bytes()
    if len(raw) < len(CKPT_MAGIC) or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < len(CKPT_MAGIC) + 8:
        raise TruncatedBlobError(f"{path}: header cut short")
    version, header_len = struct.unpack_from("<II", raw, len(CKPT_MAGIC))
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    header_start = len(CKPT_MAGIC) + 8
    if len(raw) < header_start + header_len:
        raise TruncatedBlobError(f"{path}: header cut short")
    try:
        header = json.loads(raw[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed checkpoint header") from exc
    if header.get("dtype") != "float32":
        raise FormatError(f"{path}: unsupported payload dtype {header.get('dtype')}")
    try:
        cfg = ModelConfig(**header["config"])
    except (TypeError, KeyError) as exc:
        raise FormatError(f"{path}: bad config block ({exc})") from exc

    if expect is not None:
        if expect.d_model != cfg.d_model:
            raise DimMismatchError(
                f"{path}: checkpoint d_model {cfg.d_model}, expected {expect.d_model}"
            )
        if expect != cfg:
            raise ConfigError(f"{path}: checkpoint config does not match the requested config")

    spec = param_spec(cfg)
    stored = [(name, tuple(shape)) for name, shape in header.get("params", [])]
    if stored != spec:
        raise FormatError(f"{path}: parameter manifest does not match the config")

    total = sum(int(np.prod(shape)) for _, shape in spec)
    payload_start = header_start + header_len
    expected_len = payload_start + total * 4
    if len(raw) < expected_len:
        raise TruncatedBlobError(f"{path}: payload is short ({len(raw)} < {expected_len} bytes)")
    if len(raw) > expected_len:
        raise FormatError(f"{path}: {len(raw) - expected_len} trailing bytes")

    flat = np.frombuffer(raw, dtype="<f4", offset=payload_start)
    params: dict[str, ad.Tensor] = {}
    offset = 0
    for name, shape in spec:
        size = int(np.prod(shape))
        arr = flat[offset : offset + size].reshape(shape).copy()
        params[name] = ad.Tensor(arr, requires_grad=True)
        offset += size
    return ModelState(
        config=cfg,
        params=params,
        enc_pos=positional_table(cfg.max_tokens, cfg.d_model),
        dec_pos=positional_table(cfg.max_tokens, cfg.dec_dim),
    )
