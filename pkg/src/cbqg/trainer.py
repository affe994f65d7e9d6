"""Joint question-generation training and plain QA training.

Each QG step computes the teacher-forced generation NLL, the contrastive
loss on [CLS] embeddings and the answer-reconstruction loss through the
straight-through Gumbel path, then takes one Adam step on their weighted
sum. After every epoch the model is scored by greedy generation on the
validation pairs; the epoch with the highest mean ROUGE-L F1 is returned.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .config import ModelConfig, TrainConfig, named_rng
from .contrastive import EmbeddingBatch, nt_xent_loss, positive_embeddings
from .data import PAD, DatasetSplit, QAPair, Vocab, build_vocab, encode
from .errors import ConfigError
from .model import Seq2Seq, nll_loss
from .optim import Adam
from .reconstruction import reconstruction_loss, st_gumbel_softmax
from .rouge import mean_rouge_l_f1

log = logging.getLogger(__name__)


def total_loss(l_qg, l_cl, l_ar, cfg: TrainConfig):
    """lambda_qg * l_qg + lambda_cl * l_cl + lambda_ar * l_ar; ``None`` terms are skipped."""
    loss = l_qg * cfg.lambda_qg
    if l_cl is not None:
        loss = loss + l_cl * cfg.lambda_cl
    if l_ar is not None:
        loss = loss + l_ar * cfg.lambda_ar
    return loss


def corpus_vocab(pairs: list[QAPair], max_size: int) -> Vocab:
    return build_vocab([p.question for p in pairs] + [p.answer for p in pairs], max_size)


def _ids(texts, vocab, max_len, mode) -> np.ndarray:
    return np.array([encode(t, vocab, max_len, mode) for t in texts], dtype=np.int64)


def _trim(batch: np.ndarray) -> np.ndarray:
    used = int((batch != PAD).sum(axis=1).max())
    return batch[:, :used]


def _batches(order: np.ndarray, size: int, drop_singleton: bool) -> list[np.ndarray]:
    out = [order[i:i + size] for i in range(0, len(order), size)]
    if drop_singleton and len(out) > 1 and len(out[-1]) < 2:
        out.pop()
    return out


class _Run:
    """Shared epoch/selection machinery for the QG and QA loops."""

    def __init__(self, kind: str, train: list[QAPair], val: list[QAPair], model_cfg: ModelConfig,
                 cfg: TrainConfig, vocab: Vocab | None, run_dir, save_epochs: bool,
                 echo: Callable[[str], None] | None):
        if not train:
            raise ValueError("no training pairs")
        self.kind, self.cfg = kind, cfg
        self.vocab = vocab or corpus_vocab(train, model_cfg.vocab_size)
        self.model_cfg = dataclasses.replace(model_cfg, vocab_size=len(self.vocab))
        self.model = Seq2Seq(self.model_cfg, seed=cfg.seed)
        self.opt = Adam(self.model.parameters(), cfg.learning_rate)
        self.train, self.val = train, val or train
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.save_epochs = save_epochs
        self.echo = echo
        self.history: list[dict] = []
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "metrics.jsonl").write_text("")

    def source_target(self, pairs):
        if self.kind == "qa":
            return [p.question for p in pairs], [p.answer for p in pairs]
        return [p.answer for p in pairs], [p.question for p in pairs]

    def validate(self) -> float:
        src, ref = self.source_target(self.val)
        return mean_rouge_l_f1(self.model.generate_text(src, self.vocab), ref)

    def checkpoint(self, epoch: int, score: float, params) -> Checkpoint:
        return Checkpoint(params, self.model_cfg, self.vocab, self.cfg.effective().to_dict(),
                          epoch, score, self.kind)

    def fit(self, step: Callable[[np.ndarray], dict], drop_singleton: bool) -> Checkpoint:
        shuffle_rng = named_rng(self.cfg.seed, "shuffle")
        best = None
        for epoch in range(1, self.cfg.epochs + 1):
            sums: dict[str, float] = {}
            batches = _batches(shuffle_rng.permutation(len(self.train)), self.cfg.batch_size,
                               drop_singleton)
            for idx in batches:
                for k, v in step(idx).items():
                    sums[k] = sums.get(k, 0.0) + v
            score = self.validate()
            record = {"epoch": epoch, **{k: v / len(batches) for k, v in sums.items()},
                      "val_rouge_l": score}
            self.history.append(record)
            self._emit(record)
            ckpt = self.checkpoint(epoch, score, self.model.state_dict())
            if self.run_dir is not None and self.save_epochs:
                ckpt.save(self.run_dir / f"epoch-{epoch}.ckpt")
            if best is None or score > best.val_rouge_l:
                best = ckpt
        if self.run_dir is not None:
            best.save(self.run_dir / "best.ckpt")
        best.history = self.history
        return best

    def _emit(self, record):
        if self.run_dir is not None:
            with open(self.run_dir / "metrics.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        line = "  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in record.items())
        log.info(line)
        if self.echo is not None:
            self.echo(line)


def train_qg(splits: DatasetSplit, model_cfg: ModelConfig, cfg: TrainConfig,
             qa_model: Seq2Seq | None = None, qa_vocab: Vocab | None = None,
             vocab: Vocab | None = None, run_dir=None, save_epochs: bool = True,
             echo: Callable[[str], None] | None = None) -> Checkpoint:
    """Train an answer -> question generator on the joint objective.

    ``cfg.cl_strategy == "off"`` and ``cfg.ar_enabled == False`` remove the
    contrastive and reconstruction branches entirely (the plain NLL baseline),
    and so does a zero weight on either branch.
    """
    cfg = cfg.effective()
    if cfg.ar_enabled and qa_model is None:
        raise ConfigError("ar_enabled requires a pre-trained QA model")
    run = _Run("qg", splits.train, splits.val, model_cfg, cfg, vocab, run_dir, save_epochs, echo)
    model, vocab = run.model, run.vocab
    if cfg.ar_enabled:
        if qa_vocab is not None and qa_vocab != vocab:
            raise ConfigError("QA model vocabulary differs from the generator's")
        if qa_model.config.vocab_size != len(vocab):
            raise ConfigError("QA model vocabulary size differs from the generator's")
        qa_model.freeze()
    mc = run.model_cfg
    answers = [p.answer for p in splits.train]
    questions = [p.question for p in splits.train]
    src_all = _ids(answers, vocab, mc.max_src_len, "cls_prefixed")
    tgt_all = _ids(questions, vocab, mc.max_tgt_len, "question")
    pos_all = (_ids(questions, vocab, min(mc.max_src_len, mc.max_tgt_len + 1), "cls_prefixed")
               if cfg.cl_strategy == "CL_t" else None)
    ans_all = (_ids(answers, vocab, qa_model.config.max_tgt_len, "answer")
               if cfg.ar_enabled else None)
    dropout_rng = named_rng(cfg.seed, "dropout")
    cl_rng = named_rng(cfg.seed, "cl_dropout")
    gumbel_rng = named_rng(cfg.seed, "gumbel")

    def step(idx):
        src, tgt = _trim(src_all[idx]), _trim(tgt_all[idx])
        enc = model.encode(src, train=True, rng=dropout_rng)
        logits = model.decode_logits(enc, tgt[:, :-1], train=True, rng=dropout_rng)
        l_qg = nll_loss(logits, tgt[:, 1:])
        l_cl = l_ar = None
        if cfg.cl_strategy != "off":
            pos_ids = _trim(pos_all[idx]) if pos_all is not None else None
            positives = positive_embeddings(model, cfg.cl_strategy, src, pos_ids, True, cl_rng)
            l_cl = nt_xent_loss(EmbeddingBatch(enc.cls(), positives, cfg.tau_cl))
        if cfg.ar_enabled:
            q_hat = st_gumbel_softmax(logits, cfg.tau_gs, gumbel_rng)
            l_ar = reconstruction_loss(q_hat, tgt[:, 1:] != PAD, _trim(ans_all[idx]), qa_model)
        loss = total_loss(l_qg, l_cl, l_ar, cfg)
        T.backward(loss)
        run.opt.step()
        return {
            "l_qg": l_qg.item(),
            "l_cl": 0.0 if l_cl is None else l_cl.item(),
            "l_ar": 0.0 if l_ar is None else l_ar.item(),
            "total": loss.item(),
        }

    return run.fit(step, drop_singleton=cfg.cl_active)


def train_qa(pairs: list[QAPair], model_cfg: ModelConfig, cfg: TrainConfig,
             val_pairs: list[QAPair] | None = None, vocab: Vocab | None = None, run_dir=None,
             save_epochs: bool = True, echo: Callable[[str], None] | None = None) -> Checkpoint:
    """Teacher-forced question -> answer training; selection on validation ROUGE-L.

    Without ``val_pairs`` the training pairs double as the selection set.
    """
    if not pairs:
        raise ValueError("no QA pairs to train on")
    run = _Run("qa", pairs, val_pairs, model_cfg, cfg, vocab, run_dir, save_epochs, echo)
    model, mc = run.model, run.model_cfg
    src_all = _ids([p.question for p in pairs], run.vocab, mc.max_src_len, "cls_prefixed")
    tgt_all = _ids([p.answer for p in pairs], run.vocab, mc.max_tgt_len, "answer")
    dropout_rng = named_rng(cfg.seed, "dropout")

    def step(idx):
        src, tgt = _trim(src_all[idx]), _trim(tgt_all[idx])
        enc = model.encode(src, train=True, rng=dropout_rng)
        loss = nll_loss(model.decode_logits(enc, tgt[:, :-1], train=True, rng=dropout_rng), tgt[:, 1:])
        T.backward(loss)
        run.opt.step()
        return {"l_qa": loss.item(), "total": loss.item()}

    return run.fit(step, drop_singleton=False)
