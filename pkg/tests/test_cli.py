import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from cbqg.cli import main
from cbqg.config import ModelConfig, TrainConfig
from cbqg.data import read_jsonl, read_pairs, write_jsonl, write_pairs
from cbqg.toy import toy_pairs

FIXTURES = Path(__file__).parent / "fixtures"


def write_config(path, epochs=2, **train):
    model = ModelConfig(num_layers=1, d_model=16, num_heads=2, ffn_dim=32, vocab_size=64,
                        max_src_len=24, max_tgt_len=16, dropout_rate=0.1)
    cfg = TrainConfig(**{"learning_rate": 3e-3, "epochs": epochs, "batch_size": 16, **train})
    path.write_text(json.dumps({"model": model.to_dict(), "train": cfg.to_dict()}))
    return path


@pytest.fixture
def toy_data(tmp_path):
    pairs = toy_pairs(60, seed=2)
    write_pairs(tmp_path / "data" / "train.jsonl", pairs[:50])
    write_pairs(tmp_path / "data" / "val.jsonl", pairs[50:])
    return tmp_path / "data"


# preprocess ------------------------------------------------------------------------------


def test_preprocess_fixture(tmp_path, capsys):
    out = tmp_path / "prep"
    assert main(["preprocess", "--input", str(FIXTURES / "preprocess_fixture.jsonl"),
                 "--out", str(out), "--seed", "3"]) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["records_in"] == 13 and stats["kept"] == 10
    assert stats["dropped"] == {"question_word": 1, "question_mark": 0, "answer_length": 1,
                                "meaningless_answer": 1, "duplicate": 0}
    assert stats["splits"] == {"train": 8, "val": 1, "test": 1}
    assert "kept 10/13" in capsys.readouterr().out


def test_preprocess_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        main(["preprocess", "--input", str(FIXTURES / "preprocess_fixture.jsonl"),
              "--out", str(tmp_path / name)])
    for f in ("train.jsonl", "val.jsonl", "test.jsonl", "stats.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_preprocess_nothing_left(tmp_path, capsys):
    src = tmp_path / "in.jsonl"
    write_jsonl(src, [{"question": "Tell me.", "answer": "no"}])
    assert main(["preprocess", "--input", str(src), "--out", str(tmp_path / "o")]) == 3
    assert "no data after filtering" in capsys.readouterr().err


def test_preprocess_unreadable_input(tmp_path, capsys):
    assert main(["preprocess", "--input", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_preprocess_malformed_input(tmp_path):
    src = tmp_path / "bad.jsonl"
    src.write_text("{not json\n")
    assert main(["preprocess", "--input", str(src), "--out", str(tmp_path / "o")]) == 3


# train ---------------------------------------------------------------------------------------


def test_train_qa_and_qg_run_layout(tmp_path, toy_data, capsys):
    conf = write_config(tmp_path / "c.json")
    assert main(["train", "--mode", "qa", "--data", str(toy_data), "--config", str(conf),
                 "--out", str(tmp_path / "qa")]) == 0
    assert main(["train", "--mode", "qg", "--data", str(toy_data), "--config", str(conf),
                 "--out", str(tmp_path / "qg"), "--qa-checkpoint", str(tmp_path / "qa" / "best.ckpt")]) == 0
    run = tmp_path / "qg"
    assert len((run / "metrics.jsonl").read_text().splitlines()) == 2
    assert {p.name for p in run.iterdir()} == {"manifest.json", "metrics.jsonl", "epoch-1.ckpt",
                                               "epoch-2.ckpt", "best.ckpt"}
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["mode"] == "qg" and manifest["seed"] == 0
    assert manifest["train_config"]["ar_enabled"] is True
    assert len(manifest["inputs"]) == 3
    assert "val_rouge_l=" in capsys.readouterr().out


def test_train_missing_qa_checkpoint(tmp_path, toy_data, capsys):
    conf = write_config(tmp_path / "c.json")
    assert main(["train", "--mode", "qg", "--data", str(toy_data), "--config", str(conf),
                 "--out", str(tmp_path / "run")]) == 2
    assert "qa-checkpoint" in capsys.readouterr().err


def test_train_flags_override_config(tmp_path, toy_data):
    conf = write_config(tmp_path / "c.json", epochs=5)
    assert main(["train", "--mode", "qg-baseline", "--data", str(toy_data), "--config", str(conf),
                 "--out", str(tmp_path / "run"), "--epochs", "1", "--seed", "7"]) == 0
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["train_config"]["epochs"] == 1 and manifest["seed"] == 7
    assert manifest["train_config"]["cl_strategy"] == "off"
    assert len((tmp_path / "run" / "metrics.jsonl").read_text().splitlines()) == 1


@pytest.mark.parametrize("edit,field", [
    (lambda c: c["train"].update(bogus=1), "train.bogus"),
    (lambda c: c["model"].pop("d_model"), "model.d_model"),
    (lambda c: c["train"].update(lambda_cl=-1.0), "lambda_cl"),
    (lambda c: c["train"].update(epochs="five"), "train.epochs"),
])
def test_invalid_config_names_the_field(tmp_path, toy_data, capsys, edit, field):
    conf = write_config(tmp_path / "c.json")
    raw = json.loads(conf.read_text())
    edit(raw)
    conf.write_text(json.dumps(raw))
    assert main(["train", "--mode", "qa", "--data", str(toy_data), "--config", str(conf),
                 "--out", str(tmp_path / "run")]) == 2
    assert field in capsys.readouterr().err


def test_baseline_mode_equals_zero_weight_qg(tmp_path, toy_data):
    conf = write_config(tmp_path / "c.json", lambda_cl=0.0, lambda_ar=0.0)
    for mode in ("qg", "qg-baseline"):
        assert main(["train", "--mode", mode, "--data", str(toy_data), "--config", str(conf),
                     "--out", str(tmp_path / mode)]) == 0
    assert (tmp_path / "qg" / "best.ckpt").read_bytes() == (tmp_path / "qg-baseline" / "best.ckpt").read_bytes()


# generate / synth / evaluate ------------------------------------------------------------------


@pytest.fixture
def qg_ckpt(tmp_path, toy_data):
    conf = write_config(tmp_path / "c.json", epochs=1)
    main(["train", "--mode", "qg-baseline", "--data", str(toy_data), "--config", str(conf),
          "--out", str(tmp_path / "qg")])
    return tmp_path / "qg" / "best.ckpt", conf


def test_generate_is_idempotent(tmp_path, toy_data, qg_ckpt):
    ckpt, conf = qg_ckpt
    for name in ("a.jsonl", "b.jsonl"):
        assert main(["generate", "--checkpoint", str(ckpt), "--input", str(toy_data / "val.jsonl"),
                     "--out", str(tmp_path / name), "--config", str(conf)]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    rows = read_jsonl(tmp_path / "a.jsonl")
    assert len(rows) == 10 and set(rows[0]) == {"answer", "question"}


def test_generate_config_mismatch(tmp_path, toy_data, qg_ckpt):
    ckpt, _ = qg_ckpt
    other = tmp_path / "other.json"
    raw = json.loads(write_config(other).read_text())
    raw["model"]["d_model"] = 32
    other.write_text(json.dumps(raw))
    assert main(["generate", "--checkpoint", str(ckpt), "--input", str(toy_data / "val.jsonl"),
                 "--out", str(tmp_path / "o.jsonl"), "--config", str(other)]) == 2


def test_corrupt_checkpoint_exit_code(tmp_path, toy_data):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nonsense")
    assert main(["generate", "--checkpoint", str(bad), "--input", str(toy_data / "val.jsonl"),
                 "--out", str(tmp_path / "o.jsonl")]) == 2


def test_synth_writes_pairs_and_report(tmp_path, qg_ckpt):
    ckpt, _ = qg_ckpt
    two = tmp_path / "two.jsonl"
    two.write_text("".join((FIXTURES / "summaries_fixture.jsonl").read_text().splitlines(True)[:2]))
    out = tmp_path / "synth.jsonl"
    assert main(["synth", "--checkpoint", str(ckpt), "--input", str(two), "--out", str(out)]) == 0
    report = json.loads((tmp_path / "synth.report.json").read_text())
    assert report["sentences_extracted"] == 6 and report["sentences_skipped"] == 0
    assert report["pairs_emitted"] + report["empty_questions"] == 6
    assert len(read_pairs(out)) == report["pairs_emitted"]


def test_evaluate_identical_files(tmp_path, toy_data, capsys):
    ref = toy_data / "val.jsonl"
    out = tmp_path / "report.json"
    assert main(["evaluate", "--candidates", str(ref), "--references", str(ref), "--out", str(out)]) == 0
    corpus = json.loads(out.read_text())["corpus"]
    assert all(corpus[m]["f1"] == 1.0 for m in ("rouge1", "rouge2", "rougeL", "rougeLsum"))


def test_evaluate_length_mismatch(tmp_path, toy_data):
    short = tmp_path / "short.jsonl"
    shutil.copy(toy_data / "train.jsonl", short)
    assert main(["evaluate", "--candidates", str(short), "--references", str(toy_data / "val.jsonl"),
                 "--out", str(tmp_path / "r.json")]) == 3


def test_usage_errors():
    assert main([]) == 2
    assert main(["train", "--mode", "nope"]) == 2
    assert main(["--version"]) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cbqg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("preprocess", "train", "generate", "synth", "evaluate"):
        assert cmd in proc.stdout
