"""Masked-subset selection and batch splitting.

Two strategies produce a MaskPlan per sequence: uniform random sampling, and
a semantic rule that masks the segments least similar to their predecessor
(scene-change candidates). apply_mask splits a padded batch into the visible
tokens the encoder may see and the held-out target rows, with the
bookkeeping needed to reassemble original order for the decoder.

Indices are 0-based throughout; index 0 is the first segment of a window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Batch
from .errors import ContractError, NoMaskableError

STRATEGIES = ("random", "semantic")


@dataclass
class MaskPlan:
    masked_idx: np.ndarray  # sorted unique int64, each < n_real
    strategy: str
    ratio: float

    def __post_init__(self):
        idx = np.asarray(self.masked_idx, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ContractError("MaskPlan: masked_idx must be a nonempty 1-D index list")
        if (np.diff(idx) <= 0).any():
            raise ContractError("MaskPlan: masked_idx must be strictly increasing")
        if idx[0] < 0:
            raise ContractError("MaskPlan: negative index")
        if self.strategy not in STRATEGIES:
            raise ContractError(f"MaskPlan: unknown strategy '{self.strategy}'")
        self.masked_idx = idx

    @property
    def n_masked(self) -> int:
        return int(self.masked_idx.size)

    def visible_idx(self, n_real: int) -> np.ndarray:
        if self.masked_idx[-1] >= n_real:
            raise ContractError(
                f"MaskPlan: index {int(self.masked_idx[-1])} out of range for {n_real} real tokens"
            )
        keep = np.ones(n_real, dtype=bool)
        keep[self.masked_idx] = False
        return np.flatnonzero(keep)


def mask_count(n_real: int, ratio: float) -> int:
    """floor(ratio * n_real), but at least 1 so the loss is never empty."""
    return max(1, math.floor(ratio * n_real))


def _check_ratio(ratio: float) -> None:
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"mask ratio must be in (0, 1), got {ratio}")


def random_mask(n_real: int, ratio: float, rng: np.random.Generator) -> MaskPlan:
    """Uniform sample without replacement of mask_count(n_real, ratio) indices."""
    _check_ratio(ratio)
    if n_real < 2:
        raise NoMaskableError(f"need at least 2 real tokens to mask, got {n_real}")
    m = mask_count(n_real, ratio)
    idx = rng.choice(n_real, size=m, replace=False)
    idx.sort()
    return MaskPlan(masked_idx=idx, strategy="random", ratio=ratio)


def predecessor_similarity(embeddings: np.ndarray) -> np.ndarray:
    """s[i] = cos(e_i, e_{i-1}) for i >= 1; s[0] = +1 (no predecessor).

    Computed in float64 and clipped to [-1, 1] so exact ties are stable.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(e, axis=-1)
    if (norms == 0.0).any():
        raise ContractError("semantic masking: zero-norm embedding, cosine undefined")
    s = np.empty(e.shape[0])
    s[0] = 1.0
    dots = (e[1:] * e[:-1]).sum(axis=-1)
    s[1:] = np.clip(dots / (norms[1:] * norms[:-1]), -1.0, 1.0)
    return s


def semantic_mask(embeddings: np.ndarray, ratio: float) -> MaskPlan:
    """Mask the segments with the lowest similarity to their predecessor.

    Deterministic: ties break toward the lower index, except that the first
    segment (similarity defined as +1) sorts after every equal-similarity
    peer, so it is masked last.
    """
    _check_ratio(ratio)
    embeddings = np.asarray(embeddings)
    n = embeddings.shape[0]
    if n < 2:
        raise NoMaskableError(f"need at least 2 real tokens to mask, got {n}")
    s = predecessor_similarity(embeddings)
    m = mask_count(n, ratio)
    first_last = np.zeros(n)
    first_last[0] = 1.0
    # lexsort: last key is the primary sort key
    order = np.lexsort((np.arange(n), first_last, s))
    idx = np.sort(order[:m]).astype(np.int64)
    return MaskPlan(masked_idx=idx, strategy="semantic", ratio=ratio)


@dataclass
class MaskedBatch:
    """A Batch split into encoder-visible tokens and reconstruction targets.

    Visible arrays are padded across the ragged per-sequence visible counts;
    filler slots carry visible_keep = False. Targets are flattened over the
    union of all masked slots in the batch, with (sequence, position)
    coordinates for reassembly and loss gathering.
    """

    visible_tokens: np.ndarray     # B x Vmax x d float32
    visible_keep: np.ndarray       # B x Vmax bool
    visible_positions: np.ndarray  # B x Vmax int64 (original segment index)
    target_rows: np.ndarray        # M_total x d float32 (original masked rows)
    target_seq: np.ndarray         # M_total int64
    target_pos: np.ndarray         # M_total int64
    plans: list[MaskPlan]

    @property
    def n_visible(self) -> np.ndarray:
        return self.visible_keep.sum(axis=1)


def apply_mask(batch: Batch, plans: list[MaskPlan]) -> MaskedBatch:
    """Split each sequence of a batch into visible tokens and masked targets."""
    b, _, d = batch.tokens.shape
    if len(plans) != b:
        raise ContractError(f"apply_mask: {len(plans)} plans for batch of {b}")

    visible_lists = []
    for i, plan in enumerate(plans):
        n_real = int(batch.real_len[i])
        vis = plan.visible_idx(n_real)  # validates index range
        if vis.size == 0:
            raise ContractError(f"apply_mask: sequence {i} has no visible tokens left")
        visible_lists.append(vis)

    v_max = max(v.size for v in visible_lists)
    visible_tokens = np.zeros((b, v_max, d), dtype=batch.tokens.dtype)
    visible_keep = np.zeros((b, v_max), dtype=bool)
    visible_positions = np.zeros((b, v_max), dtype=np.int64)
    targets, t_seq, t_pos = [], [], []
    for i, (plan, vis) in enumerate(zip(plans, visible_lists)):
        visible_tokens[i, : vis.size] = batch.tokens[i, vis]
        visible_keep[i, : vis.size] = True
        visible_positions[i, : vis.size] = vis
        targets.append(batch.tokens[i, plan.masked_idx])
        t_seq.append(np.full(plan.n_masked, i, dtype=np.int64))
        t_pos.append(plan.masked_idx)

    return MaskedBatch(
        visible_tokens=visible_tokens,
        visible_keep=visible_keep,
        visible_positions=visible_positions,
        target_rows=np.concatenate(targets, axis=0),
        target_seq=np.concatenate(t_seq),
        target_pos=np.concatenate(t_pos),
        plans=list(plans),
    )
