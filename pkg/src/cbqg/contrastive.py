"""In-batch contrastive loss over [CLS] sentence embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import ANSWER_MAX_LEN, CLS, QUESTION_MAX_LEN, QAPair, Vocab, encode_batch
from .errors import ConfigError
from .model import NEG_INF, Seq2Seq
from .tensor import Tensor

DEFAULT_TAU_CL = 0.3


@dataclass
class EmbeddingBatch:
    anchors: Tensor  # (N, d)
    positives: Tensor  # (N, d)
    tau: float = DEFAULT_TAU_CL


def cls_embedding(seq, model: Seq2Seq, train_mode: bool = False, rng=None) -> Tensor:
    """Encoder output at position 0 for cls-prefixed input; (d,) or (batch, d)."""
    ids = np.asarray(seq, dtype=np.int64)
    batch = np.atleast_2d(ids)
    if not np.all(batch[:, 0] == CLS):
        raise ValueError("sequence must start with [CLS]")
    rows = model.encode(batch, train=train_mode, rng=rng).cls()
    return rows[0] if ids.ndim == 1 else rows


def nt_xent_loss(batch: EmbeddingBatch) -> Tensor:
    """NT-Xent averaged over all 2N views.

    View v's positive is its partner; the denominator runs over the other
    2N - 1 views (v itself excluded), so N = 1 gives exactly 0.
    """
    a, p = batch.anchors, batch.positives
    if batch.tau <= 0:
        raise ValueError("temperature must be positive")
    if a.shape != p.shape or a.ndim != 2:
        raise ValueError(f"anchors {a.shape} and positives {p.shape} must both be (N, d)")
    n, d = a.shape
    z = T.concat([a, p], axis=0)
    sim = T.cosine_similarity(z.reshape(2 * n, 1, d), z.reshape(1, 2 * n, d))
    logits = sim * (1.0 / batch.tau) + np.diag(np.full(2 * n, NEG_INF))
    partner = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    return T.gather_nll(T.log_softmax(logits, axis=1), partner)


def positive_embeddings(model: Seq2Seq, strategy: str, answer_ids, question_ids=None,
                        train_mode: bool = True, rng=None) -> Tensor:
    """[CLS] rows of the positive views for a batch of answers.

    CL_t encodes the ground-truth questions; CL_s re-encodes the answers
    under a fresh dropout draw.
    """
    if strategy == "CL_t":
        if question_ids is None:
            raise ValueError("CL_t needs the ground-truth questions")
        return cls_embedding(question_ids, model, train_mode, rng)
    if strategy == "CL_s":
        if not train_mode or model.config.dropout_rate == 0:
            raise ConfigError("CL_s needs active dropout; positives would equal the anchors")
        return cls_embedding(answer_ids, model, True, rng)
    raise ConfigError(f"unknown contrastive strategy {strategy!r}")


def make_positives(pairs: list[QAPair], strategy: str, model: Seq2Seq, vocab: Vocab,
                   tau: float = DEFAULT_TAU_CL, train_mode: bool = True, rng=None) -> EmbeddingBatch:
    answers = encode_batch([p.answer for p in pairs], vocab,
                           min(ANSWER_MAX_LEN, model.config.max_src_len), "cls_prefixed")
    questions = encode_batch([p.question for p in pairs], vocab,
                             min(QUESTION_MAX_LEN, model.config.max_src_len), "cls_prefixed")
    if strategy == "CL_s" and (not train_mode or model.config.dropout_rate == 0):
        raise ConfigError("CL_s needs active dropout; positives would equal the anchors")
    anchors = cls_embedding(answers, model, train_mode, rng)
    positives = positive_embeddings(model, strategy, answers, questions, train_mode, rng)
    return EmbeddingBatch(anchors, positives, tau)
