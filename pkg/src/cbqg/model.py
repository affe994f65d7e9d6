"""Transformer encoder-decoder on the autodiff engine.

Pre-layer-norm blocks, sinusoidal positions, one token embedding table shared
by encoder and decoder, and a separate output projection. The same class is
used as the question generator (answer -> question) and as the QA /
reconstruction model (question -> answer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig, named_rng
from .data import BOS, EOS, PAD, Vocab, decode, encode_batch
from .tensor import Tensor

NEG_INF = -1e30
INIT_SCALE = 0.08


@dataclass
class EncoderOutput:
    z: Tensor  # (batch, src_len, d_model)
    src_mask: np.ndarray  # (batch, src_len) True at real tokens

    def cls(self) -> Tensor:
        """Row 0 of every sequence, the [CLS] position for cls_prefixed input."""
        return self.z[:, 0, :]


def sinusoidal_positions(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[: d_model // 2])
    return table


def _param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    d, f, v = cfg.d_model, cfg.ffn_dim, cfg.vocab_size
    shapes = [("embed", (v, d))]

    def attn(prefix):
        return [(f"{prefix}.{w}", (d, d)) for w in ("wq", "wk", "wv", "wo")] + [
            (f"{prefix}.{b}", (d,)) for b in ("bq", "bk", "bv", "bo")
        ]

    def ln(prefix):
        return [(f"{prefix}.g", (d,)), (f"{prefix}.b", (d,))]

    def ffn(prefix):
        return [(f"{prefix}.w1", (d, f)), (f"{prefix}.b1", (f,)),
                (f"{prefix}.w2", (f, d)), (f"{prefix}.b2", (d,))]

    for i in range(cfg.num_layers):
        p = f"enc.{i}"
        shapes += ln(f"{p}.ln1") + attn(f"{p}.self") + ln(f"{p}.ln2") + ffn(f"{p}.ffn")
    shapes += ln("enc.ln")
    for i in range(cfg.num_layers):
        p = f"dec.{i}"
        shapes += (ln(f"{p}.ln1") + attn(f"{p}.self") + ln(f"{p}.ln2") + attn(f"{p}.cross")
                   + ln(f"{p}.ln3") + ffn(f"{p}.ffn"))
    shapes += ln("dec.ln") + [("out.w", (d, v)), ("out.b", (v,))]
    return shapes


class Seq2Seq:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.config = config
        shapes = _param_shapes(config)
        if params is None:
            params = self._init_params(shapes, named_rng(seed, "init"))
        missing = [n for n, _ in shapes if n not in params]
        if missing:
            raise ValueError(f"missing parameter {missing[0]}")
        self.params = {}
        for name, shape in shapes:
            arr = np.array(params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            self.params[name] = Tensor(arr, requires_grad=True)
        self.dropout_rng = named_rng(seed, "dropout")
        self.record_attention = False
        self.attention_log: list[tuple[str, np.ndarray]] = []
        self._pos = sinusoidal_positions(max(config.max_src_len, config.max_tgt_len) + 2,
                                         config.d_model)

    @staticmethod
    def _init_params(shapes, rng) -> dict:
        out = {}
        for name, shape in shapes:
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "g":
                out[name] = np.ones(shape)
            elif len(shape) == 1:
                out[name] = np.zeros(shape)
            else:
                out[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        return out

    # parameter bookkeeping -----------------------------------------------

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def freeze(self) -> "Seq2Seq":
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
        return self

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"parameter {k} shape mismatch")
            p.data = np.array(state[k], dtype=np.float64)

    # building blocks -----------------------------------------------------

    def _ln(self, x, prefix):
        return T.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _dropout(self, x, rng):
        return T.dropout(x, self.config.dropout_rate, rng)

    def _attention(self, prefix, xq, xkv, mask_add, rng):
        p = self.params
        b, tq, d = xq.shape
        tk = xkv.shape[1]
        h = self.config.num_heads
        dh = d // h
        q = (xq @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"]).reshape(b, tq, h, dh).transpose(0, 2, 1, 3)
        k = (xkv @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"]).reshape(b, tk, h, dh).transpose(0, 2, 3, 1)
        v = (xkv @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"]).reshape(b, tk, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k) * (1.0 / math.sqrt(dh)) + mask_add
        weights = T.softmax(scores, axis=-1)
        if self.record_attention:
            self.attention_log.append((prefix, weights.data.copy()))
        ctx = self._dropout(weights, rng) @ v
        ctx = ctx.transpose(0, 2, 1, 3).reshape(b, tq, d)
        return ctx @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]

    def _ffn(self, x, prefix, rng):
        p = self.params
        hidden = T.relu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"])
        return self._dropout(hidden, rng) @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]

    def _positions(self, x: Tensor) -> Tensor:
        return x * math.sqrt(self.config.d_model) + self._pos[: x.shape[1]]

    # public api ----------------------------------------------------------

    def embed_ids(self, ids) -> Tensor:
        return T.embedding(self.params["embed"], ids)

    def embed_onehots(self, onehots: Tensor) -> Tensor:
        """One-hot (or relaxed) rows times the vocabulary embedding matrix."""
        return onehots @ self.params["embed"]

    def _rng(self, train: bool, rng):
        if not train or self.config.dropout_rate == 0:
            return None
        return self.dropout_rng if rng is None else rng

    def encode(self, src, train: bool = False, rng=None) -> EncoderOutput:
        src = np.atleast_2d(np.asarray(src, dtype=np.int64))
        self._check_len(src.shape[1], self.config.max_src_len, "source")
        return self.encode_embedded(self.embed_ids(src), src != PAD, train, rng)

    def encode_embedded(self, emb: Tensor, src_mask, train: bool = False, rng=None) -> EncoderOutput:
        rng = self._rng(train, rng)
        src_mask = np.asarray(src_mask, dtype=bool)
        self._check_len(emb.shape[1], self.config.max_src_len, "source")
        mask_add = np.where(src_mask, 0.0, NEG_INF)[:, None, None, :]
        x = self._dropout(self._positions(emb), rng)
        for i in range(self.config.num_layers):
            pre = f"enc.{i}"
            h = self._ln(x, f"{pre}.ln1")
            x = x + self._dropout(self._attention(f"{pre}.self", h, h, mask_add, rng), rng)
            x = x + self._dropout(self._ffn(self._ln(x, f"{pre}.ln2"), f"{pre}.ffn", rng), rng)
        return EncoderOutput(self._ln(x, "enc.ln"), src_mask)

    def decode_logits(self, enc: EncoderOutput, tgt_prefix, train: bool = False, rng=None) -> Tensor:
        """Teacher-forced logits, shape (batch, tgt_len, vocab)."""
        rng = self._rng(train, rng)
        tgt = np.atleast_2d(np.asarray(tgt_prefix, dtype=np.int64))
        n = tgt.shape[1]
        self._check_len(n, self.config.max_tgt_len, "target")
        causal = np.triu(np.full((n, n), NEG_INF), k=1)[None, None]
        cross = np.where(enc.src_mask, 0.0, NEG_INF)[:, None, None, :]
        x = self._dropout(self._positions(self.embed_ids(tgt)), rng)
        for i in range(self.config.num_layers):
            pre = f"dec.{i}"
            h = self._ln(x, f"{pre}.ln1")
            x = x + self._dropout(self._attention(f"{pre}.self", h, h, causal, rng), rng)
            x = x + self._dropout(
                self._attention(f"{pre}.cross", self._ln(x, f"{pre}.ln2"), enc.z, cross, rng), rng)
            x = x + self._dropout(self._ffn(self._ln(x, f"{pre}.ln3"), f"{pre}.ffn", rng), rng)
        return self._ln(x, "dec.ln") @ self.params["out.w"] + self.params["out.b"]

    def greedy_generate(self, enc: EncoderOutput, max_len: int) -> list[list[int]]:
        """Argmax decoding from [BOS]; ties go to the lowest id.

        Each returned sequence starts with [BOS], has at most ``max_len``
        ids and ends at its first [EOS] if one was produced.
        """
        batch = enc.z.shape[0]
        max_len = min(max_len, self.config.max_tgt_len)
        seqs = np.full((batch, 1), BOS, dtype=np.int64)
        done = np.zeros(batch, dtype=bool)
        with T.no_grad():
            while seqs.shape[1] < max_len and not done.all():
                logits = self.decode_logits(enc, seqs).data[:, -1, :]
                nxt = np.where(done, PAD, np.argmax(logits, axis=-1))
                seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
                done |= nxt == EOS
        out = []
        for row in seqs.tolist():
            out.append(row[: row.index(EOS) + 1] if EOS in row else row)
        return out

    def generate_text(self, texts: list[str], vocab: Vocab, max_len: int | None = None,
                      batch_size: int = 64) -> list[str]:
        """Encode cls-prefixed inputs, decode greedily and detokenise."""
        max_len = max_len or self.config.max_tgt_len
        results = []
        for start in range(0, len(texts), batch_size):
            chunk = texts[start:start + batch_size]
            src = encode_batch(chunk, vocab, self.config.max_src_len, "cls_prefixed")
            with T.no_grad():
                enc = self.encode(src)
                results += [decode(ids, vocab) for ids in self.greedy_generate(enc, max_len)]
        return results

    @staticmethod
    def _check_len(n, limit, what):
        if n > limit:
            raise ValueError(f"{what} length {n} exceeds the maximum {limit}")


def nll_loss(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood over non-[PAD] targets, in nats."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.int64))
    return T.gather_nll(T.log_softmax(logits, axis=-1), targets, targets != PAD)


def teacher_forcing(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split full [BOS] ... [EOS] rows into decoder inputs and one-ahead targets."""
    return ids[:, :-1], ids[:, 1:]
