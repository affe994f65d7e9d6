"""Straight-through Gumbel-Softmax and the answer-reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import BOS, CLS, Vocab
from .errors import ConfigError
from .model import Seq2Seq, nll_loss
from .tensor import Tensor

GUMBEL_EPS = 1e-12


def gumbel_from_uniform(u):
    return -np.log(-np.log(u))


def sample_gumbel(shape, rng: np.random.Generator, eps: float = GUMBEL_EPS) -> np.ndarray:
    """Standard Gumbel noise by inverse transform of u ~ U(eps, 1 - eps)."""
    u = eps + (1.0 - 2.0 * eps) * rng.random(shape)
    return gumbel_from_uniform(u)


def gumbel_softmax(logits: Tensor, tau: float, noise) -> Tensor:
    """softmax((log p + g) / tau) with log p = log_softmax(logits), over the last axis."""
    if tau <= 0:
        raise ValueError("tau_gs must be positive")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != logits.shape:
        raise ValueError(f"noise shape {noise.shape} does not match logits {logits.shape}")
    return T.softmax((T.log_softmax(logits, axis=-1) + noise) * (1.0 / tau), axis=-1)


@dataclass
class RelaxedQuestion:
    onehot: Tensor  # forward: exact one-hot rows; backward: soft-row gradient
    soft: Tensor
    index: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.onehot.shape[-1]


def st_gumbel_softmax(logits: Tensor, tau: float, rng: np.random.Generator,
                      noise=None) -> RelaxedQuestion:
    noise = sample_gumbel(logits.shape, rng) if noise is None else np.asarray(noise)
    soft = gumbel_softmax(logits, tau, noise)
    # winner of (log p + g); dividing by tau cannot change it
    scores = T.log_softmax(T.Tensor(logits.data), axis=-1).data + noise
    index = np.argmax(scores, axis=-1)
    hard = np.zeros(logits.shape)
    np.put_along_axis(hard, index[..., None], 1.0, axis=-1)
    return RelaxedQuestion(T.straight_through(hard, soft), soft, index)


def relaxed_source(q_hat: RelaxedQuestion, question_mask) -> tuple[Tensor, np.ndarray]:
    """Prefix constant [CLS][BOS] one-hots so q_hat looks like an encoded question."""
    b, _, v = q_hat.onehot.shape
    head = np.zeros((b, 2, v))
    head[:, 0, CLS] = 1.0
    head[:, 1, BOS] = 1.0
    mask = np.concatenate([np.ones((b, 2), dtype=bool), np.asarray(question_mask, dtype=bool)], axis=1)
    return T.concat([T.Tensor(head), q_hat.onehot], axis=1), mask


def reconstruction_loss(q_hat: RelaxedQuestion, question_mask, answer_ids, qa_model: Seq2Seq,
                        generator_vocab: Vocab | None = None, qa_vocab: Vocab | None = None) -> Tensor:
    """Mean NLL of the true answer under the frozen QA model, fed q_hat @ embedding.

    ``question_mask`` marks the generated positions that correspond to real
    (non-pad) ground-truth question tokens; ``answer_ids`` are full
    [BOS] ... [EOS] rows for the QA decoder.
    """
    if q_hat.vocab_size != qa_model.config.vocab_size:
        raise ConfigError("QA model vocabulary size differs from the generator's")
    if generator_vocab is not None and qa_vocab is not None and generator_vocab != qa_vocab:
        raise ConfigError("QA model vocabulary differs from the generator's")
    if any(p.requires_grad for p in qa_model.parameters()):
        raise ConfigError("QA model must be frozen")
    src, mask = relaxed_source(q_hat, question_mask)
    enc = qa_model.encode_embedded(qa_model.embed_onehots(src), mask, train=False)
    answer_ids = np.atleast_2d(np.asarray(answer_ids, dtype=np.int64))
    logits = qa_model.decode_logits(enc, answer_ids[:, :-1], train=False)
    return nll_loss(logits, answer_ids[:, 1:])
