import json
import math

import numpy as np
import pytest

from cbqg import tensor as T
from cbqg.checkpoint import Checkpoint
from cbqg.config import ModelConfig, TrainConfig, named_rng
from cbqg.contrastive import EmbeddingBatch, nt_xent_loss
from cbqg.data import CLS, PAD, DatasetSplit
from cbqg.errors import CheckpointError, ConfigError
from cbqg.model import Seq2Seq, nll_loss
from cbqg.optim import Adam, adam_step, init_state
from cbqg.reconstruction import reconstruction_loss, st_gumbel_softmax
from cbqg.tensor import Tensor
from cbqg.toy import toy_pairs
from cbqg.trainer import _ids, _trim, corpus_vocab, total_loss, train_qa, train_qg

SMALL = ModelConfig(num_layers=1, d_model=16, num_heads=2, ffn_dim=32, vocab_size=64,
                    max_src_len=16, max_tgt_len=16, dropout_rate=0.1)


def cfg(**kw):
    base = dict(learning_rate=3e-3, epochs=2, batch_size=8, seed=0)
    return TrainConfig(**{**base, **kw})


# objective --------------------------------------------------------------------------


def test_weighted_sum():
    assert total_loss(1.0, 2.0, 3.0, TrainConfig()) == pytest.approx(1.5, abs=1e-15)
    assert total_loss(0.0, 0.0, 0.0, TrainConfig()) == 0.0
    zero = TrainConfig(lambda_cl=0.0, lambda_ar=0.0)
    assert total_loss(0.7, 2.0, 3.0, zero) == 0.7
    assert total_loss(0.7, None, None, TrainConfig()) == 0.7


def test_zero_weights_leave_gradients_bitwise_unchanged():
    """Building the CL and AR branches with zero weight adds exact zeros."""
    pairs = toy_pairs(6, seed=1)
    vocab = corpus_vocab(pairs, 64)
    mc = ModelConfig(**{**SMALL.to_dict(), "vocab_size": len(vocab)})
    src = _trim(_ids([p.answer for p in pairs], vocab, 16, "cls_prefixed"))
    tgt = _trim(_ids([p.question for p in pairs], vocab, 16, "question"))
    pos = _trim(_ids([p.question for p in pairs], vocab, 16, "cls_prefixed"))
    ans = _trim(_ids([p.answer for p in pairs], vocab, 16, "answer"))
    qa = Seq2Seq(mc, seed=9).freeze()

    def grads(with_branches):
        m = Seq2Seq(mc, seed=0)
        rng = named_rng(0, "dropout")
        enc = m.encode(src, train=True, rng=rng)
        logits = m.decode_logits(enc, tgt[:, :-1], train=True, rng=rng)
        l_qg = nll_loss(logits, tgt[:, 1:])
        l_cl = l_ar = None
        if with_branches:
            l_cl = nt_xent_loss(EmbeddingBatch(enc.cls(), m.encode(pos, True, named_rng(0, "cl_dropout")).cls()))
            l_ar = reconstruction_loss(st_gumbel_softmax(logits, 1.0, named_rng(0, "gumbel")),
                                       tgt[:, 1:] != PAD, ans, qa)
        loss = total_loss(l_qg, l_cl, l_ar, TrainConfig(lambda_cl=0.0, lambda_ar=0.0))
        T.backward(loss)
        return loss.item(), {k: p.grad.copy() for k, p in m.params.items()}

    base_loss, base = grads(False)
    full_loss, full = grads(True)
    assert base_loss == full_loss
    for k in base:
        assert base[k].tobytes() == full[k].tobytes(), k


def test_effective_config_disables_zero_weight_branches():
    eff = TrainConfig(lambda_cl=0.0, lambda_ar=0.0, cl_strategy="CL_t", ar_enabled=True).effective()
    assert eff.cl_strategy == "off" and not eff.ar_enabled


# optimizer ---------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_parameters():
    p = [np.array([1.0, -2.0])]
    state = init_state(p)
    out = adam_step(p, [np.zeros(2)], state, 0.1)
    np.testing.assert_array_equal(out[0], p[0])
    assert state.t == 1


def test_adam_first_step_moves_by_lr():
    state = init_state([np.array(3.0)])
    out = adam_step([np.array(3.0)], [np.array(0.5)], state, 0.01)
    # bias-corrected m/sqrt(v) = g/|g| = 1 on the first step
    assert out[0] == pytest.approx(3.0 - 0.01, abs=1e-9)


def test_adam_hand_two_steps():
    lr, g1, g2 = 0.1, 2.0, -1.0
    state = init_state([np.array(0.0)])
    p = adam_step([np.array(0.0)], [np.array(g1)], state, lr)
    p = adam_step(p, [np.array(g2)], state, lr)
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    step2 = lr * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    assert p[0] == pytest.approx(-lr * 1.0 / (1 + 1e-8 / 2.0) - step2, abs=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step([np.zeros(2)], [np.zeros(3)], init_state([np.zeros(2)]), 0.1)


def test_adam_trajectories_are_reproducible():
    def run():
        x = Tensor(np.array([1.0, -1.0, 0.5]), requires_grad=True)
        opt = Adam([x], 0.05)
        for _ in range(20):
            T.backward((x * x * x * x).sum())
            opt.step()
        return x.data.tobytes()
    assert run() == run()


# training loops ------------------------------------------------------------------------


def toy_split(n=48, seed=0):
    pairs = toy_pairs(n, seed=seed)
    return DatasetSplit(pairs[: n - 8], pairs[n - 8:], [])


def test_qg_metrics_and_selection(tmp_path):
    best = train_qg(toy_split(), SMALL, cfg(epochs=3, cl_strategy="CL_t", ar_enabled=False),
                    run_dir=tmp_path)
    rows = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2, 3]
    assert set(rows[0]) == {"epoch", "l_qg", "l_cl", "l_ar", "total", "val_rouge_l"}
    assert best.val_rouge_l == max(r["val_rouge_l"] for r in rows)
    assert best.epoch == next(r["epoch"] for r in rows if r["val_rouge_l"] == best.val_rouge_l)
    for k in (1, 2, 3):
        assert (tmp_path / f"epoch-{k}.ckpt").is_file()
    loaded = Checkpoint.load(tmp_path / "best.ckpt")
    assert loaded.epoch == best.epoch
    assert rows[0]["l_ar"] == 0.0 and rows[0]["l_cl"] > 0.0


def test_qg_loss_decreases_on_toy_task():
    best = train_qg(toy_split(64), SMALL, cfg(epochs=5, ar_enabled=False))
    assert best.history[-1]["total"] < best.history[0]["total"]


def test_ar_needs_qa_model():
    with pytest.raises(ConfigError):
        train_qg(toy_split(), SMALL, cfg(ar_enabled=True))


def test_qa_model_is_untouched_by_qg_training():
    split = toy_split()
    qa = train_qa(split.train, SMALL, cfg(epochs=1, cl_strategy="off", ar_enabled=False),
                  val_pairs=split.val)
    qa_model = qa.to_model()
    before = qa_model.state_dict()
    train_qg(split, SMALL, cfg(epochs=2), qa_model=qa_model, qa_vocab=qa.vocab)
    assert all(before[k].tobytes() == qa_model.params[k].data.tobytes() for k in before)
    assert all(not p.requires_grad and p.grad is None for p in qa_model.parameters())


def test_qa_vocab_mismatch():
    split = toy_split()
    other = toy_pairs(40, seed=99)[:3]
    qa = train_qa(other, SMALL, cfg(epochs=1))
    with pytest.raises(ConfigError):
        train_qg(split, SMALL, cfg(epochs=1), qa_model=qa.to_model(), qa_vocab=qa.vocab)


def test_qa_initial_loss_is_about_log_vocab():
    split = toy_split()
    best = train_qa(split.train, SMALL, cfg(epochs=1, learning_rate=1e-6, batch_size=64))
    first = best.history[0]["l_qa"]
    assert abs(first - math.log(len(best.vocab))) < 0.5


def test_training_is_deterministic(tmp_path):
    split = toy_split()
    for name in ("a", "b"):
        train_qg(split, SMALL, cfg(epochs=2, cl_strategy="CL_s", ar_enabled=False),
                 run_dir=tmp_path / name)
    for f in ("metrics.jsonl", "best.ckpt", "epoch-1.ckpt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_qa_overfits_eight_pairs():
    pairs = toy_pairs(8, seed=5)
    mc = ModelConfig(**{**SMALL.to_dict(), "d_model": 32, "ffn_dim": 64, "num_heads": 4,
                        "dropout_rate": 0.0})
    best = train_qa(pairs, mc, cfg(learning_rate=1e-2, epochs=60))
    out = best.to_model().generate_text([p.question for p in pairs], best.vocab)
    assert out == [p.answer for p in pairs]


# checkpoints -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ckpt():
    return train_qg(toy_split(), SMALL, cfg(epochs=1, ar_enabled=False))


def test_checkpoint_round_trip_generates_identically(ckpt, tmp_path):
    ckpt.save(tmp_path / "c.ckpt")
    loaded = Checkpoint.load(tmp_path / "c.ckpt", expected_config=ckpt.model_config)
    answers = [p.answer for p in toy_split().val]
    assert loaded.to_model().generate_text(answers, loaded.vocab) == \
        ckpt.to_model().generate_text(answers, ckpt.vocab)
    assert loaded.vocab == ckpt.vocab and loaded.train_config == ckpt.train_config
    assert all(loaded.params[k].tobytes() == ckpt.params[k].tobytes() for k in ckpt.params)
    assert loaded.to_bytes() == ckpt.to_bytes()


@pytest.mark.parametrize("damage", ["magic", "version", "truncate", "trailing"])
def test_corrupt_checkpoints_are_rejected(ckpt, damage):
    raw = bytearray(ckpt.to_bytes())
    if damage == "magic":
        raw[0:1] = b"X"
    elif damage == "version":
        raw[8] = 99
    elif damage == "truncate":
        raw = raw[:-5]
    else:
        raw += b"\0"
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(bytes(raw))


def test_checkpoint_config_mismatch(ckpt):
    other = ModelConfig(**{**ckpt.model_config.to_dict(), "d_model": 32})
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(ckpt.to_bytes(), expected_config=other)


def test_checkpoint_kind_and_cls_source(ckpt):
    assert ckpt.kind == "qg"
    m = ckpt.to_model()
    assert m.config.vocab_size == len(ckpt.vocab)
    assert ckpt.vocab.id("[CLS]") == CLS
