"""Closed-book question generation with contrastive and answer-reconstruction losses,
on a small numpy autodiff engine."""

__version__ = "0.1.0"

from .checkpoint import Checkpoint
from .config import ModelConfig, TrainConfig
from .data import QAPair, Vocab, build_vocab, decode, encode, filter_pairs, split_dataset
from .model import Seq2Seq, nll_loss
from .rouge import corpus_rouge, rouge_l, rouge_lsum, rouge_n
from .trainer import total_loss, train_qa, train_qg

__all__ = [
    "Checkpoint", "ModelConfig", "TrainConfig", "QAPair", "Vocab", "build_vocab", "decode",
    "encode", "filter_pairs", "split_dataset", "Seq2Seq", "nll_loss", "corpus_rouge", "rouge_l",
    "rouge_lsum", "rouge_n", "total_loss", "train_qa", "train_qg",
]
