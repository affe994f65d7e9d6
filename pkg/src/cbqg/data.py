"""Word-level vocabulary, sequence encoding, QA-pair filtering and dataset splits."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import named_rng
from .errors import DataError

PAD, BOS, EOS, CLS, UNK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[BOS]", "[EOS]", "[CLS]", "[UNK]")

QUESTION_MAX_LEN = 128
ANSWER_MAX_LEN = 256

QUESTION_WORDS = frozenset([
    "how", "what", "can", "is", "do", "why", "are", "does", "where", "when", "should",
    "will", "did", "which", "who", "would", "if", "about", "for", "as", "could", "in",
    "after", "at", "while", "to", "am", "has", "any",
])
MIN_ANSWER_TOKENS = 8

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_REFER_RE = re.compile(r"^\s*please refer to", re.IGNORECASE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and split punctuation off as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


def normalize(text: str) -> str:
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str

    def to_dict(self) -> dict:
        return {"question": self.question, "answer": self.answer}


@dataclass(frozen=True)
class SummaryRecord:
    title: str
    summary: str


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list


class Vocab:
    """Bijective token/id table with the five fixed special ids first."""

    def __init__(self, tokens: Iterable[str]):
        self.itos = list(tokens)
        if tuple(self.itos[:5]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.itos[idx]


def build_vocab(corpus: list[str], max_size: int) -> Vocab:
    if max_size < 6:
        raise ValueError("max_size must be at least 6")
    if not corpus:
        raise ValueError("corpus is empty")
    counts = Counter(tok for text in corpus for tok in tokenize(text))
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab(list(SPECIAL_TOKENS) + [tok for tok, _ in ranked[: max_size - 5]])


def encode(text: str, vocab: Vocab, max_len: int, mode: str = "question") -> list[int]:
    """[BOS] body [EOS] padded to ``max_len``; ``cls_prefixed`` puts [CLS] first.

    Over-long bodies are truncated so the total fits; [EOS] is kept whenever
    there is room for it.
    """
    if mode not in ("question", "answer", "cls_prefixed"):
        raise ValueError(f"unknown encode mode {mode!r}")
    head = [CLS, BOS] if mode == "cls_prefixed" else [BOS]
    body = [vocab.id(t) for t in tokenize(text)]
    room = max_len - len(head) - 1
    if room >= 0:
        ids = head + body[:room] + [EOS]
    else:
        ids = head[:max_len]
    return ids + [PAD] * (max_len - len(ids))


def decode(ids: Iterable[int], vocab: Vocab) -> str:
    """Text of the body tokens: specials skipped, stops at the first [EOS]."""
    out = []
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i in (PAD, BOS, CLS):
            continue
        out.append(vocab.token(i))
    return " ".join(out)


def encode_batch(texts: list[str], vocab: Vocab, max_len: int, mode: str = "question") -> np.ndarray:
    """Encode and trim trailing all-[PAD] columns shared by the whole batch."""
    ids = np.array([encode(t, vocab, max_len, mode) for t in texts], dtype=np.int64)
    used = int((ids != PAD).sum(axis=1).max()) if len(ids) else 0
    return ids[:, :used]


# filtering ------------------------------------------------------------------


def is_meaningless(answer: str) -> bool:
    if _REFER_RE.match(answer):
        return True
    has_url = "http://" in answer or "https://" in answer
    return has_url and len(answer.split()) < 12


def drop_reason(pair: QAPair) -> str | None:
    """First filtering rule the pair violates, or None when it is kept."""
    q = pair.question.strip()
    toks = tokenize(q)
    if not toks or toks[0] not in QUESTION_WORDS:
        return "question_word"
    if not q.endswith("?"):
        return "question_mark"
    if len(pair.answer.split()) < MIN_ANSWER_TOKENS:
        return "answer_length"
    if is_meaningless(pair.answer):
        return "meaningless_answer"
    return None


def filter_pairs_with_report(pairs: list[QAPair]) -> tuple[list[QAPair], dict]:
    counts = {"question_word": 0, "question_mark": 0, "answer_length": 0,
              "meaningless_answer": 0, "duplicate": 0}
    kept, seen = [], set()
    for pair in pairs:
        reason = drop_reason(pair)
        if reason is None and (pair.question, pair.answer) in seen:
            reason = "duplicate"
        if reason is not None:
            counts[reason] += 1
            continue
        seen.add((pair.question, pair.answer))
        kept.append(pair)
    return kept, counts


def filter_pairs(pairs: list[QAPair]) -> list[QAPair]:
    return filter_pairs_with_report(pairs)[0]


def split_sizes(n: int) -> tuple[int, int, int]:
    tenth = n // 10
    return n - 2 * tenth, tenth, tenth


def split_dataset(pairs: list, seed: int) -> DatasetSplit:
    """Seeded shuffle, then a contiguous train/val/test cut.

    val and test each get floor(n/10) records and train the remainder, which
    reproduces the published 16,162/2,020/2,020 split of 20,202 pairs.
    """
    if len(pairs) < 10:
        raise ValueError("need at least 10 pairs to split")
    order = named_rng(seed, "split").permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    n_train, n_val, _ = split_sizes(len(pairs))
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )


# JSON-lines io ---------------------------------------------------------------


def read_jsonl(path, required: tuple[str, ...] = ()) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(row, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            for key in required:
                if not isinstance(row.get(key), str):
                    raise DataError(f"{path}:{lineno}: missing string field {key!r}")
            rows.append(row)
    return rows


def write_jsonl(path, rows: Iterable[dict]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_pairs(path) -> list[QAPair]:
    return [QAPair(r["question"], r["answer"]) for r in read_jsonl(path, ("question", "answer"))]


def write_pairs(path, pairs: Iterable[QAPair]):
    write_jsonl(path, (p.to_dict() for p in pairs))


def read_summaries(path) -> list[SummaryRecord]:
    return [SummaryRecord(r["title"], r["summary"]) for r in read_jsonl(path, ("title", "summary"))]
