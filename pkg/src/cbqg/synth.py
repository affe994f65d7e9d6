"""Synthetic QA pairs from summaries: every summary sentence becomes an answer
and the trained question generator supplies its question."""

from __future__ import annotations

import logging
import re

from .checkpoint import Checkpoint
from .data import QAPair, SummaryRecord
from .errors import InvariantError

log = logging.getLogger(__name__)

MIN_SENTENCE_TOKENS = 4
_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Split after '.', '!' or '?' followed by whitespace (or at end of text).

    Rule-based on purpose: abbreviations such as "Dr." also end a sentence.
    """
    return [s.strip() for s in _BOUNDARY.split(text.strip()) if s.strip()]


class QuestionGenerator:
    """Greedy question generation from a loaded checkpoint (read-only)."""

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = ckpt
        self.model = ckpt.to_model()
        self.vocab = ckpt.vocab

    def __call__(self, answers: list[str]) -> list[str]:
        return self.model.generate_text(answers, self.vocab)


def generate_question(answer: str, qg: Checkpoint | QuestionGenerator) -> str | None:
    if not answer.strip():
        log.warning("skipping empty answer")
        return None
    gen = qg if isinstance(qg, QuestionGenerator) else QuestionGenerator(qg)
    return gen([answer])[0]


def build_synthetic_corpus_with_report(summaries: list[SummaryRecord],
                                       qg: Checkpoint | QuestionGenerator,
                                       min_tokens: int = MIN_SENTENCE_TOKENS) -> tuple[list[QAPair], dict]:
    gen = qg if isinstance(qg, QuestionGenerator) else QuestionGenerator(qg)
    extracted = skipped = 0
    answers = []
    for record in summaries:
        for sentence in split_sentences(record.summary):
            extracted += 1
            if len(sentence.split()) < min_tokens:
                skipped += 1
                continue
            answers.append(sentence)
    questions = gen(answers) if answers else []
    pairs, empty = [], 0
    for answer, question in zip(answers, questions):
        if not question.strip():
            empty += 1
            continue
        pairs.append(QAPair(question, answer))
    report = {
        "input_summaries": len(summaries),
        "sentences_extracted": extracted,
        "sentences_skipped": skipped,
        "empty_questions": empty,
        "pairs_emitted": len(pairs),
    }
    check_corpus(pairs, summaries)
    return pairs, report


def build_synthetic_corpus(summaries: list[SummaryRecord], qg: Checkpoint | QuestionGenerator,
                           min_tokens: int = MIN_SENTENCE_TOKENS) -> list[QAPair]:
    return build_synthetic_corpus_with_report(summaries, qg, min_tokens)[0]


def check_corpus(pairs: list[QAPair], summaries: list[SummaryRecord]):
    """Every answer is a verbatim summary sentence and no field is empty."""
    sentences = {s for r in summaries for s in split_sentences(r.summary)}
    for i, p in enumerate(pairs):
        if not p.question.strip() or not p.answer.strip():
            raise InvariantError(f"synthetic pair {i} has an empty field")
        if p.answer not in sentences:
            raise InvariantError(f"synthetic pair {i} answer is not a summary sentence")
