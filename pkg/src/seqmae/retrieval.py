"""Interpretability by retrieval.

Reconstructed masked embeddings are matched against a caption bank that
lives in the same embedding space, by cosine similarity. Recall@k counts
how often a masked slot's own caption lands in the top k. The bank is a
(caption_id, text) list aligned row-for-row with an embedding matrix, and
is stored on disk as a .jsonl text file plus a .lvme blob beside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import model as md
from .corpus import (
    BLOB_SUFFIX,
    EmbeddingSequence,
    build_batch,
    read_blob,
    unit_normalize,
    write_blob,
)
from .errors import ContractError, FormatError
from .masking import apply_mask
from .training import _eval_plans

BANK_SUFFIX = ".jsonl"


@dataclass
class CaptionEntry:
    caption_id: str
    text: str
    embedding: np.ndarray  # (d,) float32


@dataclass
class CaptionBank:
    entries: list[CaptionEntry]

    def __post_init__(self):
        if not self.entries:
            raise ContractError("caption bank must contain at least one entry")
        ids = [e.caption_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ContractError(f"duplicate caption ids: {dupes}")
        d = self.entries[0].embedding.shape[0]
        for e in self.entries:
            if e.embedding.shape != (d,):
                raise ContractError(
                    f"caption '{e.caption_id}' has dim {e.embedding.shape}, expected ({d},)"
                )
            if not np.isfinite(e.embedding).all():
                raise ContractError(f"caption '{e.caption_id}' embedding is not finite")
        # cached unit rows for scoring; zero rows cannot be cosine-ranked
        matrix = np.stack([e.embedding for e in self.entries]).astype(np.float64)
        norms = np.linalg.norm(matrix, axis=1)
        if (norms == 0).any():
            bad = [ids[i] for i in np.nonzero(norms == 0)[0]]
            raise ContractError(f"zero-norm caption embeddings: {bad}")
        self._unit = matrix / norms[:, None]
        self._ids = ids

    @property
    def dim(self) -> int:
        return self.entries[0].embedding.shape[0]

    def __len__(self) -> int:
        return len(self.entries)


def build_caption_bank(
    captions: Sequence[tuple[str, str]],
    embeddings: np.ndarray,
    normalize: bool = False,
) -> CaptionBank:
    """Pair (caption_id, text) tuples with embedding rows, in order.

    normalize=True unit-normalizes each row first, mirroring the corpus
    ingestion flag.
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    if embeddings.ndim != 2:
        raise ContractError(f"embeddings must be 2-D, got shape {embeddings.shape}")
    if len(captions) != embeddings.shape[0]:
        raise ContractError(
            f"{len(captions)} captions but {embeddings.shape[0]} embedding rows"
        )
    if normalize:
        embeddings = unit_normalize(embeddings)
    entries = [
        CaptionEntry(caption_id=str(cid), text=str(text), embedding=embeddings[i].copy())
        for i, (cid, text) in enumerate(captions)
    ]
    return CaptionBank(entries=entries)


def write_caption_bank(bank: CaptionBank, jsonl_path: str | Path) -> Path:
    """Write <stem>.jsonl with one {caption_id, text} record per line and a
    <stem>.lvme blob with the embedding rows in the same order."""
    jsonl_path = Path(jsonl_path)
    if jsonl_path.suffix != BANK_SUFFIX:
        raise ContractError(f"caption bank text file must end in {BANK_SUFFIX}")
    matrix = np.stack([e.embedding for e in bank.entries])
    write_blob(jsonl_path.with_suffix(BLOB_SUFFIX), matrix)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for e in bank.entries:
            fh.write(json.dumps({"caption_id": e.caption_id, "text": e.text}, sort_keys=True))
            fh.write("\n")
    return jsonl_path


def read_caption_bank(jsonl_path: str | Path, normalize: bool = False) -> CaptionBank:
    jsonl_path = Path(jsonl_path)
    if not jsonl_path.exists():
        raise FormatError(f"caption bank file not found: {jsonl_path}")
    captions: list[tuple[str, str]] = []
    with open(jsonl_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{jsonl_path}:{lineno}: bad JSON: {exc}") from exc
            if "caption_id" not in rec or "text" not in rec:
                raise FormatError(f"{jsonl_path}:{lineno}: missing caption_id or text")
            captions.append((rec["caption_id"], rec["text"]))
    blob_path = jsonl_path.with_suffix(BLOB_SUFFIX)
    if not blob_path.exists():
        raise FormatError(f"caption bank blob not found: {blob_path}")
    matrix = read_blob(blob_path)
    if matrix.shape[0] != len(captions):
        raise FormatError(
            f"{jsonl_path} lists {len(captions)} captions but blob has {matrix.shape[0]} rows"
        )
    return build_caption_bank(captions, matrix, normalize=normalize)


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------


def retrieve_topk(query: np.ndarray, bank: CaptionBank, k: int) -> list[tuple[str, float]]:
    """Top-k captions by cosine, descending; exact ties break by caption_id."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != bank.dim:
        raise ContractError(f"query dim {query.shape[0]} vs bank dim {bank.dim}")
    if not np.isfinite(query).all():
        raise ContractError("query is not finite")
    norm = np.linalg.norm(query)
    if norm == 0:
        raise ContractError("zero-norm query cannot be cosine-ranked")
    if not 1 <= k <= len(bank):
        raise ContractError(f"k={k} outside [1, {len(bank)}]")
    scores = bank._unit @ (query / norm)
    order = sorted(range(len(bank)), key=lambda i: (-scores[i], bank._ids[i]))
    return [(bank._ids[i], float(scores[i])) for i in order[:k]]


@dataclass
class SlotRecord:
    video_id: str
    position: int
    caption_id: str           # ground truth: the slot's own caption
    retrieved: list[tuple[str, float]]
    hit: bool


@dataclass
class RetrievalReport:
    strategy: str
    ratio: float
    k: int
    seed: int
    slots: list[SlotRecord] = field(default_factory=list)

    @property
    def recall(self) -> float:
        if not self.slots:
            return 0.0
        return sum(s.hit for s in self.slots) / len(self.slots)

    def write(self, path: str | Path) -> Path:
        """One JSON header line, then one JSON line per masked slot."""
        path = Path(path)
        header = {
            "strategy": self.strategy,
            "ratio": self.ratio,
            "k": self.k,
            "seed": self.seed,
            "n_slots": len(self.slots),
            "recall": self.recall,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for s in self.slots:
                rec = {
                    "video_id": s.video_id,
                    "position": s.position,
                    "caption_id": s.caption_id,
                    "retrieved": [[cid, score] for cid, score in s.retrieved],
                    "hit": s.hit,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return path


ReconstructFn = Callable[[md.ModelState, object, object], np.ndarray]


def _model_reconstruct(state: md.ModelState, batch, mb) -> np.ndarray:
    z = md.encode(state, mb.visible_tokens, mb.visible_positions, mb.visible_keep)
    e_hat = md.decode(state, z, mb, batch)
    return e_hat.data[mb.target_seq, mb.target_pos]


def recall_at_k(
    state: md.ModelState,
    sequences: list[EmbeddingSequence],
    bank: CaptionBank,
    strategy: str,
    ratio: float,
    k: int,
    seed: int = 0,
    batch_size: int = 16,
    reconstruct_fn: ReconstructFn | None = None,
) -> tuple[float, RetrievalReport]:
    """Mask every sequence once (fixed strategy and seed), reconstruct the
    masked slots, and score each reconstruction against the bank.

    reconstruct_fn replaces the encode/decode path when given; it receives
    (state, batch, masked_batch) and must return one row per masked slot in
    (target_seq, target_pos) order. Tests use it to wire in reference
    predictors such as the ground-truth rows themselves.
    """
    if not sequences:
        raise ContractError("empty sequence list")
    for seq in sequences:
        if seq.caption_ids is None:
            raise ContractError(f"sequence '{seq.video_id}' carries no caption_ids")
    if sequences[0].embeddings.shape[1] != bank.dim:
        raise ContractError(
            f"corpus dim {sequences[0].embeddings.shape[1]} vs bank dim {bank.dim}"
        )
    if reconstruct_fn is None:
        reconstruct_fn = _model_reconstruct
    max_tokens = state.config.max_tokens
    plans = _eval_plans(sequences, strategy, ratio, seed, max_tokens)
    report = RetrievalReport(strategy=strategy, ratio=ratio, k=k, seed=seed)
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start : start + batch_size]
        chunk_plans = plans[start : start + batch_size]
        batch, _ = build_batch(chunk, max_tokens)
        mb = apply_mask(batch, chunk_plans)
        predicted = reconstruct_fn(state, batch, mb)
        if predicted.shape != mb.target_rows.shape:
            raise ContractError(
                f"reconstruction shape {predicted.shape} vs expected {mb.target_rows.shape}"
            )
        for row, s_idx, pos in zip(predicted, mb.target_seq, mb.target_pos):
            seq = chunk[int(s_idx)]
            truth = seq.caption_ids[int(pos)]
            top = retrieve_topk(row, bank, k)
            report.slots.append(
                SlotRecord(
                    video_id=seq.video_id,
                    position=int(pos),
                    caption_id=truth,
                    retrieved=top,
                    hit=any(cid == truth for cid, _ in top),
                )
            )
    return report.recall, report
