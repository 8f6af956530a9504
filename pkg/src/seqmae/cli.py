"""Command-line pipeline driver.

Subcommands: gen-synth, ingest, pretrain, probe, retrieve, gradcheck,
sweep, report. Every run resolves its parameters from defaults, an optional
JSON config file, then explicit flags (strongest last), derives a run id
from the resolved parameters, and appends result records to
<out>/records.jsonl as line-delimited JSON with the fields
(run_id, subcommand, params, metric, value, seed, corpus_digest).

Exit codes: 0 ok, 1 failed check, 2 usage, 3 missing file, 4 bad config,
5 contract violation, 6 bad file format, 7 training aborted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import corpus as cp
from . import model as md
from . import probing as pb
from . import retrieval as rt
from . import training as tr
from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    SeqmaeError,
    TrainingAbortError,
)

EXIT_CHECK_FAILED = 1
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_CONTRACT = 5
EXIT_FORMAT = 6
EXIT_TRAINING = 7

RECORDS_NAME = "records.jsonl"

# resolved defaults per subcommand; parser options all default to None so a
# config file can sit between these and explicit flags
_DEFAULTS: dict[str, dict] = {
    "gen-synth": {
        "prototypes": 8,
        "dim": 64,
        "videos": 200,
        "len_min": 8,
        "len_max": 24,
        "temperature": 0.3,
        "sigma": 0.1,
        "seed": 0,
        "segment_len": 5.0,
    },
    "ingest": {"normalize": False},
    "pretrain": {
        "mask_strategy": "random",
        "mask_ratio": None,
        "epochs": 150,
        "seed": 0,
        "batch_size": 16,
        "base_lr": 1.5e-4,
        "weight_decay": 0.05,
        "warmup_epochs": 40,
        "enc_depth": 32,
        "dec_depth": 4,
        "dec_dim": None,
        "heads": 8,
        "max_tokens": 256,
        "checkpoint_every": 0,
    },
    "probe": {
        "task": "dominant",
        "head": "linear",
        "features": "latents",
        "seed": 0,
        "epochs": None,
        "lr": None,
        "batch_size": 16,
        "train_frac": 0.5,
        "heads": 8,
    },
    "retrieve": {"strategy": "random", "ratio": 0.4, "k": 5, "seed": 0},
    "gradcheck": {
        "dim": 8,
        "enc_depth": 2,
        "dec_depth": 1,
        "heads": 2,
        "tokens": 6,
        "ratio": 0.5,
        "seed": 0,
        "samples": 4,
        "tol": 1e-4,
    },
    "sweep": {
        "mask_ratio": None,
        "enc_depth": None,
        "segment_len": None,
        "strategy": "random",
        "epochs": 3,
        "seed": 0,
        "batch_size": 16,
        "base_lr": 1.5e-4,
        "warmup_epochs": 1,
        "depth": 2,
        "dec_depth": 1,
        "heads": 8,
        "prototypes": 8,
        "dim": 64,
        "videos": 60,
        "sigma": 0.1,
        "synth_seed": 0,
        "len_min": 8,
        "len_max": 24,
    },
    "report": {"metric": None},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqmae")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, **kwargs) -> argparse.ArgumentParser:
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="JSON file of flag values")
        return p

    p = add("gen-synth", help="generate a synthetic corpus plus caption bank")
    p.add_argument("--out", required=True)
    p.add_argument("--prototypes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--videos", type=int)
    p.add_argument("--len-min", type=int)
    p.add_argument("--len-max", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--segment-len", type=float)

    p = add("ingest", help="validate a corpus and rewrite it, optionally unit-normalized")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true", default=None)

    p = add("pretrain", help="masked-embedding pretraining on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-strategy", choices=["random", "semantic"])
    p.add_argument("--mask-ratio", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--warmup-epochs", type=int)
    p.add_argument("--enc-depth", type=int)
    p.add_argument("--dec-depth", type=int)
    p.add_argument("--dec-dim", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--checkpoint-every", type=int)

    p = add("probe", help="frozen-backbone probe on a labeled corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["dominant", "hasab", "order"])
    p.add_argument("--head", choices=["linear", "attentive", "regression"])
    p.add_argument("--features", choices=["latents", "raw"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--heads", type=int)
    p.add_argument("--out", help="records directory (default: checkpoint's directory)")

    p = add("retrieve", help="caption retrieval over reconstructed masked slots")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--ratio", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--strategy", choices=["random", "semantic"])
    p.add_argument("--seed", type=int)
    p.add_argument("--report", required=True, help="per-slot report file")
    p.add_argument("--out", help="records directory (default: report's directory)")

    p = add("gradcheck", help="finite-difference check of the training gradient")
    p.add_argument("--dim", type=int)
    p.add_argument("--enc-depth", type=int)
    p.add_argument("--dec-depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--tokens", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="records directory (optional)")

    p = add("sweep", help="one short pretrain+eval per grid cell along one axis")
    p.add_argument("--corpus", help="fixed corpus (mask-ratio and enc-depth sweeps)")
    p.add_argument("--out", required=True)
    p.add_argument("--mask-ratio", help="grid: start:stop:step or comma list")
    p.add_argument("--enc-depth", help="grid: comma list of depths")
    p.add_argument("--segment-len", help="grid: comma list of seconds (regenerates corpora)")
    p.add_argument("--strategy", choices=["random", "semantic"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--warmup-epochs", type=int)
    p.add_argument("--depth", type=int, help="encoder depth when not the swept axis")
    p.add_argument("--dec-depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--prototypes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--videos", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--synth-seed", type=int)
    p.add_argument("--len-min", type=int)
    p.add_argument("--len-max", type=int)

    p = add("report", help="aggregate result records without recomputing")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--metric")
    p.add_argument("--out", help="write aggregate lines here as well")

    return parser


# ---------------------------------------------------------------------------
# config resolution and result records
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _resolve(subcommand: str, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    params = dict(_DEFAULTS[subcommand])
    cli = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    if args.config is not None:
        file_values = _load_config(args.config)
        unknown = set(file_values) - set(cli)
        if unknown:
            raise ConfigError(
                f"config keys not valid for '{subcommand}': {sorted(unknown)}"
            )
        params.update(file_values)
    params.update({k: v for k, v in cli.items() if v is not None})
    return params


def _run_id(subcommand: str, params: dict) -> str:
    """12 hex chars over the resolved inputs; output paths do not contribute."""
    hashed = {
        k: v
        for k, v in params.items()
        if k not in ("out", "report", "records") and v is not None
    }
    payload = json.dumps({"subcommand": subcommand, "params": hashed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _append_records(out_dir: Path, rows: list[dict]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RECORDS_NAME
    with open(path, "a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def _record(run_id, subcommand, params, metric, value, seed, corpus_digest) -> dict:
    clean = {k: v for k, v in params.items() if v is not None}
    return {
        "run_id": run_id,
        "subcommand": subcommand,
        "params": clean,
        "metric": metric,
        "value": value,
        "seed": seed,
        "corpus_digest": corpus_digest,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_gen_synth(params: dict) -> int:
    cfg = cp.SynthConfig(
        num_prototypes=params["prototypes"],
        embedding_dim=params["dim"],
        num_videos=params["videos"],
        len_min=params["len_min"],
        len_max=params["len_max"],
        transition_temperature=params["temperature"],
        noise_sigma=params["sigma"],
        seed=params["seed"],
        segment_len_s=params["segment_len"],
    )
    synth = cp.synth_generate(cfg)
    out = Path(params["out"])
    cp.write_corpus(synth.sequences, out)
    bank = rt.build_caption_bank(
        list(zip(synth.caption_ids, synth.caption_texts)), synth.prototypes
    )
    rt.write_caption_bank(bank, out / "captions.jsonl")
    digest = cp.corpus_digest(out)
    run_id = _run_id("gen-synth", params)
    _append_records(
        out,
        [_record(run_id, "gen-synth", params, "num_videos", len(synth.sequences), params["seed"], digest)],
    )
    print(f"gen-synth {run_id}: {len(synth.sequences)} videos, digest {digest[:12]}")
    return 0


def _cmd_ingest(params: dict) -> int:
    sequences, manifest = cp.read_corpus(params["in_dir"])
    if params["normalize"]:
        sequences = [
            cp.EmbeddingSequence(
                video_id=s.video_id,
                embeddings=cp.unit_normalize(s.embeddings),
                segment_len_s=s.segment_len_s,
                encoder_id=s.encoder_id,
                caption_ids=s.caption_ids,
                labels=s.labels,
            )
            for s in sequences
        ]
    out = Path(params["out"])
    cp.write_corpus(sequences, out)
    digest = cp.corpus_digest(out)
    run_id = _run_id("ingest", params)
    _append_records(
        out,
        [_record(run_id, "ingest", params, "num_videos", len(sequences), 0, digest)],
    )
    print(f"ingest {run_id}: {len(sequences)} videos, digest {digest[:12]}")
    return 0


def _model_config_from(params: dict, d_model: int) -> md.ModelConfig:
    return md.ModelConfig(
        d_model=d_model,
        enc_depth=params["enc_depth"],
        dec_depth=params["dec_depth"],
        dec_dim=params.get("dec_dim"),
        num_heads=params["heads"],
        max_tokens=params["max_tokens"],
    )


def _cmd_pretrain(params: dict) -> int:
    sequences, _ = cp.read_corpus(params["corpus"])
    digest = cp.corpus_digest(params["corpus"])
    model_cfg = _model_config_from(params, sequences[0].dim)
    train_cfg = tr.PretrainConfig(
        base_lr=params["base_lr"],
        weight_decay=params["weight_decay"],
        batch_size=params["batch_size"],
        warmup_epochs=params["warmup_epochs"],
        epochs=params["epochs"],
        max_tokens=params["max_tokens"],
        mask_strategy=params["mask_strategy"],
        mask_ratio=params["mask_ratio"],
        seed=params["seed"],
        checkpoint_every=params["checkpoint_every"],
    )
    out = Path(params["out"])
    _, log = tr.pretrain(sequences, model_cfg, train_cfg, out_dir=out)
    losses = log.losses()
    run_id = _run_id("pretrain", params)
    _append_records(
        out,
        [
            _record(run_id, "pretrain", params, "first_epoch_loss", losses[0], params["seed"], digest),
            _record(run_id, "pretrain", params, "final_epoch_loss", losses[-1], params["seed"], digest),
        ],
    )
    print(f"pretrain {run_id}: loss {losses[0]:.4f} -> {losses[-1]:.4f} over {len(losses)} epochs")
    return 0


def _task_arrays(sequences, task: str, train_frac: float, seed: int):
    """(train_idx, test_idx, labels, num_classes) for one probe task."""
    if task == "order":
        train_idx, test_idx = cp.order_task_split(sequences, train_frac, seed)
        labels = np.array([s.labels["ab_order"] for s in sequences], dtype=np.int64)
        return train_idx, test_idx, labels, 2
    key = {"dominant": "dominant_prototype", "hasab": "has_ab"}[task]
    labels = np.array([s.labels.get(key, -1) for s in sequences], dtype=np.int64)
    if (labels < 0).any():
        raise ContractError(f"corpus lacks '{key}' labels for task '{task}'")
    order = np.random.default_rng(seed).permutation(len(sequences))
    n_train = int(round(train_frac * len(sequences)))
    if n_train == 0 or n_train == len(sequences):
        raise ContractError(
            f"train_frac {train_frac} leaves one split empty for {len(sequences)} videos"
        )
    return (
        sorted(order[:n_train].tolist()),
        sorted(order[n_train:].tolist()),
        labels,
        int(labels.max()) + 1,
    )


def _cmd_probe(params: dict) -> int:
    sequences, _ = cp.read_corpus(params["corpus"])
    digest = cp.corpus_digest(params["corpus"])
    state = md.load_checkpoint(params["ckpt"])
    if state.config.d_model != sequences[0].dim:
        raise ContractError(
            f"checkpoint d_model {state.config.d_model} vs corpus dim {sequences[0].dim}"
        )
    task, head = params["task"], params["head"]
    train_idx, test_idx, labels, num_classes = _task_arrays(
        sequences, task, params["train_frac"], params["seed"]
    )
    if params["features"] == "latents":
        feats = pb.compute_latents(state, sequences)
        cls_row = True
    else:
        feats = [s.embeddings for s in sequences]
        cls_row = False

    cfg = pb.ProbeConfig(
        kind=head,
        num_classes=num_classes if head != "regression" else 2,
        lr=params["lr"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        num_heads=params["heads"],
        seed=params["seed"],
    )
    if head == "attentive":
        tr_feats = [feats[i] for i in train_idx]
        te_feats = [feats[i] for i in test_idx]
        trained = pb.train_attentive_probe(tr_feats, labels[train_idx], cfg)
        result = pb.eval_attentive_probe(trained, te_feats, labels[test_idx])
        metric, value = "accuracy", result["accuracy"]
    else:
        pooled = pb.pool_latents(feats, cls_row=cls_row)
        if head == "linear":
            trained = pb.train_linear_probe(pooled[train_idx], labels[train_idx], cfg)
            result = pb.eval_linear_probe(trained, pooled[test_idx], labels[test_idx])
            metric, value = "accuracy", result["accuracy"]
        else:
            targets = labels.astype(np.float64)
            trained = pb.train_regression_probe(pooled[train_idx], targets[train_idx], cfg)
            result = pb.eval_regression_probe(trained, pooled[test_idx], targets[test_idx])
            metric, value = "mse", result["mse"]
    out = Path(params["out"]) if params.get("out") else Path(params["ckpt"]).parent
    run_id = _run_id("probe", params)
    _append_records(
        out, [_record(run_id, "probe", params, metric, value, params["seed"], digest)]
    )
    print(f"probe {run_id}: task={task} head={head} {metric}={value:.4f} "
          f"(train {len(train_idx)} / test {len(test_idx)})")
    return 0


def _cmd_retrieve(params: dict) -> int:
    sequences, _ = cp.read_corpus(params["corpus"])
    digest = cp.corpus_digest(params["corpus"])
    state = md.load_checkpoint(params["ckpt"])
    bank = rt.read_caption_bank(params["bank"])
    recall, report = rt.recall_at_k(
        state,
        sequences,
        bank,
        params["strategy"],
        params["ratio"],
        params["k"],
        seed=params["seed"],
    )
    report_path = Path(params["report"])
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report.write(report_path)
    out = Path(params["out"]) if params.get("out") else report_path.parent
    run_id = _run_id("retrieve", params)
    _append_records(
        out,
        [_record(run_id, "retrieve", params, f"recall_at_{params['k']}", recall, params["seed"], digest)],
    )
    print(f"retrieve {run_id}: R@{params['k']} = {recall:.4f} over {len(report.slots)} slots")
    return 0


def _cmd_gradcheck(params: dict) -> int:
    worst = tr.gradient_fidelity(
        d_model=params["dim"],
        enc_depth=params["enc_depth"],
        dec_depth=params["dec_depth"],
        num_heads=params["heads"],
        n_tokens=params["tokens"],
        ratio=params["ratio"],
        seed=params["seed"],
        samples_per_param=params["samples"],
    )
    ok = worst <= params["tol"]
    print(f"gradcheck: max relative error {worst:.3e} (tolerance {params['tol']:.0e}) "
          f"{'ok' if ok else 'FAILED'}")
    if params.get("out"):
        run_id = _run_id("gradcheck", params)
        _append_records(
            Path(params["out"]),
            [_record(run_id, "gradcheck", params, "max_rel_error", worst, params["seed"], "")],
        )
    return 0 if ok else EXIT_CHECK_FAILED


def _parse_grid(spec: str, cast) -> list:
    """'a:b:s' inclusive range, or comma list, or single value."""
    spec = str(spec)
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid '{spec}' must be start:stop:step")
        start, stop, step = (float(x) for x in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"grid '{spec}' must ascend with positive step")
        n = int(math.floor((stop - start) / step + 0.5)) + 1
        return [cast(round(start + i * step, 12)) for i in range(n)]
    return [cast(float(x)) for x in spec.split(",")]


def _sweep_corpus_for_segment_len(params: dict, seg_len: float) -> list[cp.EmbeddingSequence]:
    # hold per-video duration fixed while the segment length varies, so the
    # grid varies token counts the way a re-segmentation of the same footage
    # would; len bounds are stated at the 5 s reference
    min_dur = params["len_min"] * 5.0
    max_dur = params["len_max"] * 5.0
    cfg = cp.SynthConfig(
        num_prototypes=params["prototypes"],
        embedding_dim=params["dim"],
        num_videos=params["videos"],
        len_min=max(2, int(math.ceil(min_dur / seg_len))),
        len_max=int(math.ceil(max_dur / seg_len)),
        noise_sigma=params["sigma"],
        seed=params["synth_seed"],
        segment_len_s=seg_len,
    )
    return cp.synth_generate(cfg).sequences


def _cmd_sweep(params: dict) -> int:
    axes = {
        k: params[k] for k in ("mask_ratio", "enc_depth", "segment_len") if params[k] is not None
    }
    if len(axes) != 1:
        raise ConfigError(
            f"sweep needs exactly one of --mask-ratio/--enc-depth/--segment-len, got {sorted(axes) or 'none'}"
        )
    axis, spec = next(iter(axes.items()))
    values = _parse_grid(spec, int if axis == "enc_depth" else float)

    fixed_sequences = None
    digest = ""
    if axis != "segment_len":
        if not params.get("corpus"):
            raise ConfigError(f"sweep over {axis} needs --corpus")
        fixed_sequences, _ = cp.read_corpus(params["corpus"])
        digest = cp.corpus_digest(params["corpus"])

    out = Path(params["out"])
    rows = []
    for value in values:
        sequences = (
            fixed_sequences
            if fixed_sequences is not None
            else _sweep_corpus_for_segment_len(params, value)
        )
        model_cfg = md.ModelConfig(
            d_model=sequences[0].dim,
            enc_depth=value if axis == "enc_depth" else params["depth"],
            dec_depth=params["dec_depth"],
            num_heads=params["heads"],
        )
        train_cfg = tr.PretrainConfig(
            base_lr=params["base_lr"],
            batch_size=params["batch_size"],
            warmup_epochs=params["warmup_epochs"],
            epochs=params["epochs"],
            mask_strategy=params["strategy"],
            mask_ratio=value if axis == "mask_ratio" else None,
            seed=params["seed"],
        )
        state, log = tr.pretrain(sequences, model_cfg, train_cfg)
        ratio = train_cfg.mask_ratio
        evald = tr.eval_reconstruction(
            state, sequences, params["strategy"], ratio, seed=params["seed"]
        )
        cell = dict(params)
        cell[axis] = value
        run_id = _run_id("sweep", cell)
        for metric, v in (
            ("final_epoch_loss", log.losses()[-1]),
            ("mean_cosine", evald["mean_cosine"]),
        ):
            rows.append(_record(run_id, "sweep", cell, metric, v, params["seed"], digest))
        print(f"sweep {run_id}: {axis}={value} final_loss={log.losses()[-1]:.4f} "
              f"mean_cosine={evald['mean_cosine']:.4f}")
    _append_records(out, rows)
    print(f"sweep: {len(values)} cells, {len(rows)} records")
    return 0


def _cmd_report(params: dict) -> int:
    rows = []
    for path in params["records"]:
        p = Path(path)
        if not p.exists():
            raise FormatError(f"records file not found: {p}")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{p}:{lineno}: bad record: {exc}") from exc
    if params["metric"]:
        rows = [r for r in rows if r.get("metric") == params["metric"]]
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r["subcommand"], r["metric"]), []).append(float(r["value"]))
    lines = []
    for (sub, metric), values in sorted(groups.items()):
        agg = {
            "subcommand": sub,
            "metric": metric,
            "n": len(values),
            "mean": float(np.mean(values)),
            "min": float(np.min(values)),
            "max": float(np.max(values)),
        }
        lines.append(agg)
        print(f"{sub:10s} {metric:20s} n={agg['n']:<4d} "
              f"mean={agg['mean']:.6g} min={agg['min']:.6g} max={agg['max']:.6g}")
    if not lines:
        print("no records matched")
    if params.get("out"):
        with open(params["out"], "w", encoding="utf-8") as fh:
            for agg in lines:
                fh.write(json.dumps(agg, sort_keys=True) + "\n")
    return 0


_HANDLERS = {
    "gen-synth": _cmd_gen_synth,
    "ingest": _cmd_ingest,
    "pretrain": _cmd_pretrain,
    "probe": _cmd_probe,
    "retrieve": _cmd_retrieve,
    "gradcheck": _cmd_gradcheck,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        params = _resolve(args.subcommand, args)
        return _HANDLERS[args.subcommand](params)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAbortError as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except FormatError as exc:
        print(f"error: bad file format: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ContractError as exc:
        print(f"error: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except SeqmaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
