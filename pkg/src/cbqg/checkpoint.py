"""Binary checkpoint format.

Layout::

    b"CBQGCKPT"                    magic
    uint32 LE                      format version
    uint64 LE                      header length in bytes
    header                         UTF-8 JSON: model_config, train_config,
                                   epoch, val_rouge_l, vocab, params[name, shape]
    float64 LE buffers             one per parameter, in header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig, model_config_from_dict
from .data import Vocab
from .errors import CheckpointError
from .model import Seq2Seq

MAGIC = b"CBQGCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass(eq=False)
class Checkpoint:
    params: dict[str, np.ndarray]
    model_config: ModelConfig
    vocab: Vocab
    train_config: dict = field(default_factory=dict)
    epoch: int = 0
    val_rouge_l: float = 0.0
    kind: str = "qg"
    history: list = field(default_factory=list, repr=False, compare=False)

    def to_model(self, seed: int = 0) -> Seq2Seq:
        return Seq2Seq(self.model_config, params=self.params, seed=seed)

    def to_bytes(self) -> bytes:
        header = {
            "kind": self.kind,
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config,
            "epoch": self.epoch,
            "val_rouge_l": self.val_rouge_l,
            "vocab": list(self.vocab.itos),
            "params": [[name, list(arr.shape)] for name, arr in self.params.items()],
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)), blob]
        parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in self.params.values()]
        return b"".join(parts)

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, expected_config: ModelConfig | None = None) -> "Checkpoint":
        if len(raw) < _PREFIX.size:
            raise CheckpointError("truncated checkpoint header")
        magic, version, hlen = _PREFIX.unpack_from(raw)
        if magic != MAGIC:
            raise CheckpointError("not a checkpoint file")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        start = _PREFIX.size
        if len(raw) < start + hlen:
            raise CheckpointError("truncated checkpoint header")
        try:
            header = json.loads(raw[start:start + hlen].decode("utf-8"))
            config = model_config_from_dict(header["model_config"], strict=True)
            vocab = Vocab(header["vocab"])
        except (ValueError, KeyError) as exc:
            raise CheckpointError(f"bad checkpoint header: {exc}") from None
        if expected_config is not None and config != expected_config:
            raise CheckpointError("checkpoint model config does not match the expected config")
        if len(vocab) != config.vocab_size:
            raise CheckpointError("vocabulary size does not match model config")
        offset = start + hlen
        params = {}
        for name, shape in header["params"]:
            n = int(np.prod(shape)) * 8
            if offset + n > len(raw):
                raise CheckpointError(f"truncated buffer for parameter {name}")
            params[name] = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
            offset += n
        if offset != len(raw):
            raise CheckpointError("trailing bytes after the last parameter buffer")
        ckpt = cls(params, config, vocab, header["train_config"], header["epoch"],
                   header["val_rouge_l"], header.get("kind", "qg"))
        try:
            ckpt.to_model()
        except ValueError as exc:
            raise CheckpointError(str(exc)) from None
        return ckpt

    @classmethod
    def load(cls, path, expected_config: ModelConfig | None = None) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes(), expected_config)
