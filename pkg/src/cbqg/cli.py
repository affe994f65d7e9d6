"""Command-line entry point: preprocess, train, generate, synth, evaluate.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import Checkpoint
from .config import ModelConfig, TrainConfig, model_config_from_dict, train_config_from_dict
from .data import (DatasetSplit, filter_pairs_with_report, read_jsonl, read_pairs, read_summaries,
                   split_dataset, write_jsonl, write_pairs)
from .errors import CheckpointError, ConfigError, DataError, InvariantError
from .rouge import evaluation_report
from .synth import QuestionGenerator, build_synthetic_corpus_with_report
from .trainer import train_qa, train_qg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_file(path, what="input"):
    if not Path(path).is_file():
        raise UsageError(f"cannot read {what} file {path}")


def load_config(path) -> tuple[ModelConfig, TrainConfig]:
    """Read a {"model": {...}, "train": {...}} file; every field must be present."""
    _require_file(path, "config")
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg}") from None
    if not isinstance(raw, dict) or set(raw) != {"model", "train"}:
        raise ConfigError("config must have exactly the sections 'model' and 'train'")
    return (model_config_from_dict(raw["model"], strict=True),
            train_config_from_dict(raw["train"], strict=True))


def check_compatible(ckpt: Checkpoint, cfg: ModelConfig):
    """Checkpoint architecture must equal the config; vocab may be smaller than its cap."""
    got = dataclasses.replace(ckpt.model_config, vocab_size=cfg.vocab_size)
    if got != cfg or ckpt.model_config.vocab_size > cfg.vocab_size:
        raise CheckpointError("checkpoint does not match the model config")


def _load_checkpoint(path, config_path=None) -> Checkpoint:
    _require_file(path, "checkpoint")
    ckpt = Checkpoint.load(path)
    if config_path is not None:
        check_compatible(ckpt, load_config(config_path)[0])
    return ckpt


# commands -------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    _require_file(args.input)
    pairs = read_pairs(args.input)
    kept, dropped = filter_pairs_with_report(pairs)
    if len(kept) == 0:
        raise DataError("no data after filtering")
    if len(kept) < 10:
        raise DataError(f"only {len(kept)} pairs after filtering; need at least 10 to split")
    split = split_dataset(kept, args.seed)
    out = Path(args.out)
    for name in ("train", "val", "test"):
        write_pairs(out / f"{name}.jsonl", getattr(split, name))
    stats = {
        "input": str(args.input),
        "input_sha256": _sha256(args.input),
        "seed": args.seed,
        "records_in": len(pairs),
        "kept": len(kept),
        "dropped": dropped,
        "splits": {n: len(getattr(split, n)) for n in ("train", "val", "test")},
    }
    _dump(out / "stats.json", stats)
    print(f"kept {len(kept)}/{len(pairs)}; train/val/test = "
          f"{len(split.train)}/{len(split.val)}/{len(split.test)}")
    return EXIT_OK


def _training_data(args):
    data = Path(args.data)
    if data.is_dir():
        for name in ("train.jsonl", "val.jsonl"):
            _require_file(data / name)
        return read_pairs(data / "train.jsonl"), read_pairs(data / "val.jsonl"), [data / "train.jsonl", data / "val.jsonl"]
    _require_file(data)
    inputs = [data]
    val = None
    if args.val is not None:
        _require_file(args.val)
        val = read_pairs(args.val)
        inputs.append(Path(args.val))
    return read_pairs(data), val, inputs


def cmd_train(args) -> int:
    model_cfg, cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.mode == "qg-baseline":
        overrides.update(lambda_cl=0.0, lambda_ar=0.0, cl_strategy="off", ar_enabled=False)
    if args.mode == "qa":
        overrides.update(cl_strategy="off", ar_enabled=False)
    cfg = dataclasses.replace(cfg, **overrides)
    if args.mode != "qa":
        cfg = cfg.effective()
    train, val, inputs = _training_data(args)
    if not train:
        raise DataError("training file is empty")

    qa_ckpt = None
    if args.mode == "qg" and cfg.ar_enabled:
        if args.qa_checkpoint is None:
            raise ConfigError("ar_enabled requires --qa-checkpoint")
        qa_ckpt = _load_checkpoint(args.qa_checkpoint)
        inputs.append(Path(args.qa_checkpoint))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "manifest.json", {
        "tool": "cbqg",
        "version": __version__,
        "mode": args.mode,
        "seed": cfg.seed,
        "model_config": model_cfg.to_dict(),
        "train_config": cfg.to_dict(),
        "inputs": {str(p): _sha256(p) for p in inputs},
    })
    if args.mode == "qa":
        best = train_qa(train, model_cfg, cfg, val_pairs=val, run_dir=out, echo=print)
    else:
        splits = DatasetSplit(train, val or train, [])
        qa_model = qa_ckpt.to_model() if qa_ckpt is not None else None
        qa_vocab = qa_ckpt.vocab if qa_ckpt is not None else None
        best = train_qg(splits, model_cfg, cfg, qa_model=qa_model, qa_vocab=qa_vocab,
                        run_dir=out, echo=print)
    print(f"best epoch {best.epoch}: val ROUGE-L {best.val_rouge_l:.4f} -> {out / 'best.ckpt'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint, args.config)
    _require_file(args.input)
    src_field, dst_field = ("question", "answer") if ckpt.kind == "qa" else ("answer", "question")
    rows = read_jsonl(args.input, (src_field,))
    outputs = QuestionGenerator(ckpt)([r[src_field] for r in rows]) if rows else []
    write_jsonl(args.out, ({src_field: r[src_field], dst_field: o} for r, o in zip(rows, outputs)))
    print(f"wrote {len(rows)} records to {args.out}")
    return EXIT_OK


def report_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".report.json")


def cmd_synth(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint, args.config)
    _require_file(args.input)
    summaries = read_summaries(args.input)
    if not summaries:
        raise DataError("no summaries in input")
    pairs, report = build_synthetic_corpus_with_report(summaries, ckpt)
    write_pairs(args.out, pairs)
    _dump(report_path(args.out), report)
    print(json.dumps(report))
    return EXIT_OK


def _texts(path, field: str) -> list[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                raise DataError(f"{path}:{lineno}: malformed JSON") from None
            if isinstance(row, dict):
                row = row.get(field)
            if not isinstance(row, str):
                raise DataError(f"{path}:{lineno}: no string field {field!r}")
            out.append(row)
    return out


def cmd_evaluate(args) -> int:
    _require_file(args.candidates)
    _require_file(args.references)
    cands = _texts(args.candidates, args.field)
    refs = _texts(args.references, args.field)
    if len(cands) != len(refs):
        raise DataError(f"{len(cands)} candidates but {len(refs)} references")
    if not cands:
        raise DataError("nothing to evaluate")
    report = evaluation_report(cands, refs)
    _dump(args.out, report)
    print(json.dumps({m: round(s["f1"], 4) for m, s in report["corpus"].items()}))
    return EXIT_OK


# parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbqg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cbqg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter raw QA pairs and split 80/10/10")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a QG (joint or baseline) or QA model")
    p.add_argument("--mode", choices=("qg", "qg-baseline", "qa"), required=True)
    p.add_argument("--data", required=True, help="directory with train/val.jsonl, or a JSONL file")
    p.add_argument("--val", help="validation JSONL when --data is a file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--qa-checkpoint", help="frozen QA model for answer reconstruction")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate questions (or answers) with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("synth", help="build a synthetic QA corpus from summaries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="ROUGE-1/2/L/Lsum of candidates against references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--field", default="question")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
