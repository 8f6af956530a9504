"""Embedding-sequence corpora.

Covers the data model for per-video segment-embedding sequences, the binary
persistence format (one blob per video plus a line-delimited manifest),
segmentation arithmetic, synthetic corpus generation with planted temporal
structure, dynamic window sampling, and padded batch assembly.

Binary blob layout (little-endian, extension ``.lvme``):

    8 bytes  magic  b"LVMECORP"
    u32      format version (currently 1)
    u32      N   number of segment rows
    u32      d   embedding dimension
    N*d*4    float32 payload, row-major

The manifest is ``manifest.jsonl``: a header line followed by one record per
video. Both are written with sorted keys so identical corpora are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    DimMismatchError,
    FormatError,
    TruncatedBlobError,
    VersionMismatchError,
)

BLOB_MAGIC = b"LVMECORP"
FORMAT_VERSION = 1
BLOB_SUFFIX = ".lvme"
MANIFEST_NAME = "manifest.jsonl"

# padded slots hold this vector; correctness never depends on its value
# (attention excludes padded slots outright), which the padding-invariance
# tests exploit by overwriting it with garbage
PAD_VALUE = 0.0


def _as_embedding_matrix(embeddings) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(embeddings, dtype=np.float32))
    if arr.ndim != 2:
        raise ContractError(f"embeddings must be 2-D (N, d), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"embeddings must be nonempty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("embeddings contain non-finite values")
    return arr


@dataclass
class EmbeddingSequence:
    """One video's worth of consecutive segment embeddings."""

    video_id: str
    embeddings: np.ndarray
    segment_len_s: float = 5.0
    encoder_id: str = "unknown"
    caption_ids: list[str] | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = _as_embedding_matrix(self.embeddings)
        if self.caption_ids is not None and len(self.caption_ids) != self.n_segments:
            raise ContractError(
                f"{self.video_id}: {len(self.caption_ids)} caption_ids for {self.n_segments} segments"
            )

    @property
    def n_segments(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class ManifestEntry:
    video_id: str
    blob: str
    n_segments: int
    labels: dict
    caption_ids: list[str] | None


@dataclass
class CorpusManifest:
    version: int
    embedding_dim: int
    segment_len_s: float
    encoder_id: str
    entries: list[ManifestEntry]


@dataclass
class Batch:
    """Fixed-shape stack of variable-length windows.

    tokens[b, i] is the PAD vector for i >= real_len[b]; attn_keep marks the
    real slots; positions[b, i] = i (segment index within the window).
    """

    tokens: np.ndarray      # B x L x d float32
    attn_keep: np.ndarray   # B x L bool
    positions: np.ndarray   # B x L int64
    real_len: np.ndarray    # B int64


def unit_normalize(matrix: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Scale each row to unit L2 norm; zero rows are a contract error."""
    norms = np.linalg.norm(matrix.astype(np.float64), axis=-1, keepdims=True)
    if (norms < tol).any():
        raise ContractError("cannot normalize: zero-norm row present")
    return (matrix.astype(np.float64) / norms).astype(np.float32)


# ---------------------------------------------------------------------------
# segmentation arithmetic
# ---------------------------------------------------------------------------


def segment_schedule(duration_s: float, segment_len_s: float) -> list[tuple[float, float]]:
    """Split [0, duration) into consecutive [start, end) intervals.

    Produces ceil(duration / segment_len) intervals; the final one may be
    shorter than segment_len_s.
    """
    if duration_s <= 0 or segment_len_s <= 0:
        raise ContractError(
            f"segment_schedule needs positive inputs, got duration={duration_s}, segment={segment_len_s}"
        )
    count = math.ceil(duration_s / segment_len_s)
    return [
        (i * segment_len_s, min((i + 1) * segment_len_s, duration_s))
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# binary blobs and corpus directories
# ---------------------------------------------------------------------------


def write_blob(path: Path | str, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix)
    if matrix.ndim != 2:
        raise ContractError(f"blob payload must be 2-D, got {matrix.shape}")
    if matrix.dtype != np.dtype(np.float32):
        raise ContractError(f"blob payload must be float32, got {matrix.dtype}")
    n, d = matrix.shape
    header = BLOB_MAGIC + struct.pack("<III", FORMAT_VERSION, n, d)
    payload = matrix.astype("<f4", copy=False)  # no-op on little-endian hosts
    Path(path).write_bytes(header + payload.tobytes())


def read_blob(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < len(BLOB_MAGIC) or raw[: len(BLOB_MAGIC)] != BLOB_MAGIC:
        raise BadMagicError(f"{path}: not an embedding blob (bad magic)")
    if len(raw) < len(BLOB_MAGIC) + 12:
        raise TruncatedBlobError(f"{path}: header cut short")
    version, n, d = struct.unpack_from("<III", raw, len(BLOB_MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    expected = len(BLOB_MAGIC) + 12 + n * d * 4
    if len(raw) < expected:
        raise TruncatedBlobError(f"{path}: payload is {len(raw)} bytes, header promises {expected}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    flat = np.frombuffer(raw, dtype="<f4", offset=len(BLOB_MAGIC) + 12)
    return flat.reshape(n, d).copy()


def write_corpus(sequences: list[EmbeddingSequence], out_dir: Path | str) -> Path:
    """Persist sequences as blobs/<video_id>.lvme plus manifest.jsonl."""
    if not sequences:
        raise ContractError("write_corpus: empty corpus")
    dims = {s.dim for s in sequences}
    if len(dims) > 1:
        raise ContractError(f"write_corpus: mixed embedding dims {sorted(dims)}")
    ids = [s.video_id for s in sequences]
    if len(set(ids)) != len(ids):
        raise ContractError("write_corpus: duplicate video_id")
    encoders = {s.encoder_id for s in sequences}
    if len(encoders) > 1:
        raise ContractError(f"write_corpus: mixed encoder_ids {sorted(encoders)}")
    seg_lens = {float(s.segment_len_s) for s in sequences}
    if len(seg_lens) > 1:
        raise ContractError(f"write_corpus: mixed segment lengths {sorted(seg_lens)}")

    out_dir = Path(out_dir)
    blob_dir = out_dir / "blobs"
    blob_dir.mkdir(parents=True, exist_ok=True)

    header = {
        "version": FORMAT_VERSION,
        "embedding_dim": int(dims.pop()),
        "segment_len_s": seg_lens.pop(),
        "encoder_id": encoders.pop(),
        "count": len(sequences),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for seq in sequences:
        rel = f"blobs/{seq.video_id}{BLOB_SUFFIX}"
        write_blob(out_dir / rel, seq.embeddings)
        record = {
            "video_id": seq.video_id,
            "blob": rel,
            "n_segments": seq.n_segments,
            "labels": seq.labels,
            "caption_ids": seq.caption_ids,
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text("\n".join(lines) + "\n")
    return manifest_path


def read_corpus(dir_path: Path | str) -> tuple[list[EmbeddingSequence], CorpusManifest]:
    dir_path = Path(dir_path)
    manifest_path = dir_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise FormatError(f"{dir_path}: no {MANIFEST_NAME}")
    lines = manifest_path.read_text().splitlines()
    if not lines:
        raise FormatError(f"{manifest_path}: empty manifest")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: malformed JSON ({exc})") from exc

    for key in ("version", "embedding_dim", "segment_len_s", "encoder_id", "count"):
        if key not in header:
            raise FormatError(f"{manifest_path}: header missing '{key}'")
    if header["version"] != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{manifest_path}: manifest version {header['version']}, expected {FORMAT_VERSION}"
        )
    if header["count"] != len(records):
        raise FormatError(f"{manifest_path}: header count {header['count']} vs {len(records)} records")

    dim = int(header["embedding_dim"])
    sequences: list[EmbeddingSequence] = []
    entries: list[ManifestEntry] = []
    for rec in records:
        for key in ("video_id", "blob", "n_segments"):
            if key not in rec:
                raise FormatError(f"{manifest_path}: record missing '{key}'")
        blob_path = dir_path / rec["blob"]
        if not blob_path.exists():
            raise FormatError(f"{manifest_path}: blob {rec['blob']} does not exist")
        matrix = read_blob(blob_path)
        if matrix.shape[1] != dim:
            raise DimMismatchError(
                f"{rec['blob']}: blob dim {matrix.shape[1]} vs manifest dim {dim}"
            )
        if matrix.shape[0] != rec["n_segments"]:
            raise FormatError(
                f"{rec['blob']}: blob has {matrix.shape[0]} rows, manifest says {rec['n_segments']}"
            )
        if not np.isfinite(matrix).all():
            raise FormatError(f"{rec['blob']}: non-finite values in payload")
        entry = ManifestEntry(
            video_id=rec["video_id"],
            blob=rec["blob"],
            n_segments=int(rec["n_segments"]),
            labels=rec.get("labels") or {},
            caption_ids=rec.get("caption_ids"),
        )
        entries.append(entry)
        sequences.append(
            EmbeddingSequence(
                video_id=entry.video_id,
                embeddings=matrix,
                segment_len_s=float(header["segment_len_s"]),
                encoder_id=str(header["encoder_id"]),
                caption_ids=entry.caption_ids,
                labels=entry.labels,
            )
        )
    manifest = CorpusManifest(
        version=int(header["version"]),
        embedding_dim=dim,
        segment_len_s=float(header["segment_len_s"]),
        encoder_id=str(header["encoder_id"]),
        entries=entries,
    )
    return sequences, manifest


def corpus_digest(dir_path: Path | str) -> str:
    """sha256 over the manifest and every referenced blob, in manifest order."""
    dir_path = Path(dir_path)
    h = hashlib.sha256()
    manifest_path = dir_path / MANIFEST_NAME
    h.update(manifest_path.read_bytes())
    _, manifest = read_corpus(dir_path)
    for entry in manifest.entries:
        h.update((dir_path / entry.blob).read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# synthetic corpus with planted temporal structure
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    num_prototypes: int = 8
    embedding_dim: int = 64
    num_videos: int = 200
    len_min: int = 8
    len_max: int = 24
    transition_temperature: float = 0.3
    drift_bias: float = 0.8
    noise_sigma: float = 0.1
    seed: int = 0
    segment_len_s: float = 5.0

    def __post_init__(self):
        if self.num_prototypes < 2:
            raise ConfigError("num_prototypes must be >= 2")
        if not 0.0 <= self.drift_bias <= 1.0:
            raise ConfigError("drift_bias must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.len_min < 2:
            raise ConfigError("len_min must be >= 2")
        if self.len_max < self.len_min:
            raise ConfigError("len_max must be >= len_min")
        if self.num_videos < 1:
            raise ConfigError("num_videos must be >= 1")
        if self.transition_temperature <= 0:
            raise ConfigError("transition_temperature must be > 0")
        if self.embedding_dim < 2:
            raise ConfigError("embedding_dim must be >= 2")

    def self_transition_prob(self) -> float:
        """Softmax over K states with logit 1/temperature on the current one."""
        bias = math.exp(1.0 / self.transition_temperature)
        return bias / (bias + (self.num_prototypes - 1))


@dataclass
class SynthCorpus:
    sequences: list[EmbeddingSequence]
    prototypes: np.ndarray          # K x d float32, unit rows
    caption_ids: list[str]
    caption_texts: list[str]


def _walk_labels(states: np.ndarray) -> dict:
    counts = np.bincount(states, minlength=2)
    dominant = int(counts.argmax())  # argmax takes the smallest id on ties
    occ0 = np.flatnonzero(states == 0)
    occ1 = np.flatnonzero(states == 1)
    has_ab = bool(occ0.size and occ1.size)
    ab_order = int(occ0[0] < occ1[0]) if has_ab else -1
    return {"dominant_prototype": dominant, "has_ab": int(has_ab), "ab_order": ab_order}


def synth_generate(cfg: SynthConfig) -> SynthCorpus:
    """Generate a corpus of self-transition-biased prototype walks.

    Each video is a Markov walk over K unit-norm prototype directions, so
    consecutive segments are usually similar; every segment embedding is its
    prototype plus Gaussian noise, renormalized. When the walk does change
    state it drifts: with probability drift_bias the hop goes to the next
    prototype in a fixed cyclic order, otherwise to a uniformly random other
    one. Drift gives each video a progression that a sequence model can
    interpolate from both sides but a copy-the-neighbor heuristic cannot.
    Videos come in mirrored pairs (a walk and its reversal with fresh noise)
    sharing a pair_id, which plants an order-sensitive task whose two
    classes have identical prototype multisets.
    """
    root = np.random.SeedSequence(cfg.seed)
    proto_ss, walk_ss, noise_ss = root.spawn(3)
    proto_rng = np.random.default_rng(proto_ss)
    walk_rng = np.random.default_rng(walk_ss)
    noise_rng = np.random.default_rng(noise_ss)

    k, d = cfg.num_prototypes, cfg.embedding_dim
    prototypes = unit_normalize(proto_rng.normal(size=(k, d)).astype(np.float32))

    p_stay = cfg.self_transition_prob()
    caption_ids = [f"proto_{i:04d}" for i in range(k)]
    caption_texts = [f"recurring scene cluster {i:04d}" for i in range(k)]

    def embed(states: np.ndarray) -> np.ndarray:
        base = prototypes[states]
        if cfg.noise_sigma == 0.0:
            return base.copy()
        noisy = base.astype(np.float64) + cfg.noise_sigma * noise_rng.normal(size=base.shape)
        return unit_normalize(noisy.astype(np.float32))

    sequences: list[EmbeddingSequence] = []
    video_idx = 0
    pair_id = 0
    while video_idx < cfg.num_videos:
        n = int(walk_rng.integers(cfg.len_min, cfg.len_max + 1))
        states = np.empty(n, dtype=np.int64)
        states[0] = walk_rng.integers(k)
        for i in range(1, n):
            prev = states[i - 1]
            if walk_rng.random() < p_stay:
                states[i] = prev
            elif k == 2 or walk_rng.random() < cfg.drift_bias:
                states[i] = (prev + 1) % k
            else:
                # uniform over the k-2 states that are neither prev nor prev+1
                hop = walk_rng.integers(k - 2)
                for skip in sorted((prev, (prev + 1) % k)):
                    if hop >= skip:
                        hop += 1
                states[i] = hop
        for mirror, walk in enumerate((states, states[::-1])):
            if video_idx >= cfg.num_videos:
                break
            labels = _walk_labels(walk)
            labels["pair_id"] = pair_id
            labels["mirror"] = mirror
            sequences.append(
                EmbeddingSequence(
                    video_id=f"synth_{video_idx:05d}",
                    embeddings=embed(walk),
                    segment_len_s=cfg.segment_len_s,
                    encoder_id="synthetic-prototypes-v1",
                    caption_ids=[caption_ids[s] for s in walk],
                    labels=labels,
                )
            )
            video_idx += 1
        pair_id += 1

    return SynthCorpus(
        sequences=sequences,
        prototypes=prototypes,
        caption_ids=caption_ids,
        caption_texts=caption_texts,
    )


def order_task_split(
    sequences: list[EmbeddingSequence], train_frac: float = 0.5, seed: int = 0
) -> tuple[list[int], list[int]]:
    """Split indices for the order-sensitive task, balanced by construction.

    Keeps only mirrored pairs where both videos contain prototypes 0 and 1
    and their order labels disagree; each such pair contributes one example
    per class with an identical prototype multiset. Pairs are never split
    across train and test.
    """
    by_pair: dict[int, list[int]] = {}
    for i, seq in enumerate(sequences):
        labels = seq.labels
        if labels.get("has_ab") == 1 and "pair_id" in labels:
            by_pair.setdefault(labels["pair_id"], []).append(i)
    usable = []
    for pair in sorted(by_pair):
        members = by_pair[pair]
        if len(members) == 2:
            l0 = sequences[members[0]].labels["ab_order"]
            l1 = sequences[members[1]].labels["ab_order"]
            if l0 != l1:
                usable.append(members)
    if not usable:
        raise ContractError("order_task_split: no discordant mirrored pairs in corpus")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(usable))
    n_train = int(round(train_frac * len(usable)))
    if n_train == 0 or n_train == len(usable):
        raise ContractError(
            f"order_task_split: {len(usable)} usable pairs at train_frac "
            f"{train_frac} leaves one side empty"
        )
    train, test = [], []
    for rank, pair_pos in enumerate(order):
        (train if rank < n_train else test).extend(usable[pair_pos])
    return sorted(train), sorted(test)


# ---------------------------------------------------------------------------
# window sampling and batch assembly
# ---------------------------------------------------------------------------


def sample_window(
    seq: EmbeddingSequence, rng: np.random.Generator, k_min: int = 2
) -> EmbeddingSequence:
    """Contiguous random window: length uniform on {k_min..N}, start uniform.

    Sequences shorter than 2 segments are returned unchanged. Labels are
    copied from the source video (they describe the whole video, not the
    window); caption_ids are sliced along with the rows.
    """
    n = seq.n_segments
    if n < 2:
        return seq
    k_min = min(k_min, n)
    k = int(rng.integers(k_min, n + 1))
    start = int(rng.integers(0, n - k + 1))
    return EmbeddingSequence(
        video_id=seq.video_id,
        embeddings=seq.embeddings[start : start + k].copy(),
        segment_len_s=seq.segment_len_s,
        encoder_id=seq.encoder_id,
        caption_ids=None if seq.caption_ids is None else seq.caption_ids[start : start + k],
        labels=dict(seq.labels),
    )


def build_batch(
    windows: list[EmbeddingSequence], max_tokens: int = 256
) -> tuple[Batch, int]:
    """Stack windows into a padded Batch; returns (batch, truncation count).

    Windows longer than max_tokens keep their first max_tokens segments.
    """
    if not windows:
        raise ContractError("build_batch: empty input")
    if max_tokens < 1:
        raise ContractError("build_batch: max_tokens must be >= 1")
    dims = {w.dim for w in windows}
    if len(dims) > 1:
        raise ContractError(f"build_batch: mixed dims {sorted(dims)}")
    d = dims.pop()

    truncated = sum(1 for w in windows if w.n_segments > max_tokens)
    lens = [min(w.n_segments, max_tokens) for w in windows]
    b, l = len(windows), max(lens)
    tokens = np.full((b, l, d), PAD_VALUE, dtype=np.float32)
    for i, (w, n) in enumerate(zip(windows, lens)):
        tokens[i, :n] = w.embeddings[:n]
    real_len = np.asarray(lens, dtype=np.int64)
    attn_keep = np.arange(l)[None, :] < real_len[:, None]
    positions = np.broadcast_to(np.arange(l, dtype=np.int64), (b, l)).copy()
    return Batch(tokens=tokens, attn_keep=attn_keep, positions=positions, real_len=real_len), truncated
