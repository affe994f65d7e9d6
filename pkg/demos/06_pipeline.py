"""
The full command-line pipeline
==============================

preprocess -> train qa -> train qg (CL_t + AR) -> synth -> train qa on the
synthetic corpus -> evaluate, on the small templated corpus shipped with the
tests. Everything lands in a temporary directory; pass a path to keep it.
"""

import json
import sys
import tempfile
from pathlib import Path

from cbqg.cli import main
from cbqg.config import ModelConfig, TrainConfig

fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cbqg-"))
work.mkdir(parents=True, exist_ok=True)

config = work / "config.json"
config.write_text(json.dumps({
    "model": ModelConfig(d_model=48, ffn_dim=96, vocab_size=200, max_src_len=24,
                         max_tgt_len=16).to_dict(),
    "train": TrainConfig(learning_rate=3e-3, epochs=15, batch_size=16).to_dict(),
}, indent=2))


def run(*args):
    print("\n$ cbqg", " ".join(args))
    code = main(list(args))
    if code != 0:
        sys.exit(code)


run("preprocess", "--input", str(fixtures / "pipeline_qa.jsonl"), "--out", str(work / "data"))
run("train", "--mode", "qa", "--data", str(work / "data"), "--config", str(config), "--out", str(work / "qa"))
run("train", "--mode", "qg", "--data", str(work / "data"), "--config", str(config), "--out", str(work / "qg"),
    "--qa-checkpoint", str(work / "qa" / "best.ckpt"))
run("synth", "--checkpoint", str(work / "qg" / "best.ckpt"),
    "--input", str(fixtures / "pipeline_summaries.jsonl"), "--out", str(work / "synth.jsonl"))
run("train", "--mode", "qa", "--data", str(work / "synth.jsonl"), "--val", str(work / "data" / "val.jsonl"),
    "--config", str(config), "--out", str(work / "qa_synth"))
run("generate", "--checkpoint", str(work / "qg" / "best.ckpt"), "--input", str(work / "data" / "test.jsonl"),
    "--out", str(work / "questions.jsonl"))
run("evaluate", "--candidates", str(work / "questions.jsonl"),
    "--references", str(work / "data" / "test.jsonl"), "--out", str(work / "eval.json"))
print("\noutputs in", work)
