"""ROUGE-1/2/L/Lsum with a fixed, documented tokenisation.

Text is lowercased and split on runs of non-alphanumeric characters; no
stemming, no stopwords. Lsum splits on newlines and uses union-LCS.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

_WORD_RE = re.compile(r"[a-z0-9]+")

METRICS = ("rouge1", "rouge2", "rougeL", "rougeLsum")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, hits: int, n_cand: int, n_ref: int) -> "RougeScore":
        if n_cand == 0 or n_ref == 0:
            return cls(0.0, 0.0, 0.0)
        p, r = hits / n_cand, hits / n_ref
        return cls(p, r, f1(p, r))


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rouge_tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand, ref = _ngrams(rouge_tokens(candidate), n), _ngrams(rouge_tokens(reference), n)
    hits = sum((cand & ref).values())
    return RougeScore.from_counts(hits, sum(cand.values()), sum(ref.values()))


def lcs_table(a: list, b: list) -> list[list[int]]:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a, 1):
        row, prev = table[i], table[i - 1]
        for j, y in enumerate(b, 1):
            row[j] = prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1])
    return table


def lcs_ref_indices(ref: list, cand: list) -> list[int]:
    """Indices into ``ref`` of one longest common subsequence (backtracked)."""
    table = lcs_table(ref, cand)
    i, j, out = len(ref), len(cand), []
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            out.append(i - 1)
            i -= 1
            j -= 1
        elif table[i][j - 1] > table[i - 1][j]:
            j -= 1
        else:
            i -= 1
    return out[::-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    cand, ref = rouge_tokens(candidate), rouge_tokens(reference)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    return RougeScore.from_counts(lcs_table(ref, cand)[-1][-1], len(cand), len(ref))


def _sentences(text: str) -> list[list[str]]:
    return [toks for toks in (rouge_tokens(s) for s in text.split("\n")) if toks]


def rouge_lsum(candidate: str, reference: str) -> RougeScore:
    """Summary-level LCS: per reference sentence, union the LCS hits over all
    candidate sentences; each token is credited at most as often as it occurs
    on both sides."""
    cands, refs = _sentences(candidate), _sentences(reference)
    n_cand = sum(map(len, cands))
    n_ref = sum(map(len, refs))
    if n_cand == 0 or n_ref == 0:
        return RougeScore(0.0, 0.0, 0.0)
    cand_left = Counter(t for s in cands for t in s)
    ref_left = Counter(t for s in refs for t in s)
    hits = 0
    for ref in refs:
        union = sorted({i for cand in cands for i in lcs_ref_indices(ref, cand)})
        for tok in (ref[i] for i in union):
            if cand_left[tok] > 0 and ref_left[tok] > 0:
                hits += 1
                cand_left[tok] -= 1
                ref_left[tok] -= 1
    return RougeScore.from_counts(hits, n_cand, n_ref)


def score_all(candidate: str, reference: str) -> dict[str, RougeScore]:
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
        "rougeLsum": rouge_lsum(candidate, reference),
    }


def corpus_rouge(pairs: list[tuple[str, str]]) -> dict[str, RougeScore]:
    """Unweighted mean of per-example precision, recall and F1 for every metric."""
    if not pairs:
        raise ValueError("no (candidate, reference) pairs given")
    rows = [score_all(c, r) for c, r in pairs]
    n = len(rows)
    return {
        m: RougeScore(
            sum(row[m].precision for row in rows) / n,
            sum(row[m].recall for row in rows) / n,
            sum(row[m].f1 for row in rows) / n,
        )
        for m in METRICS
    }


def mean_rouge_l_f1(candidates: list[str], references: list[str]) -> float:
    if len(candidates) != len(references) or not candidates:
        raise ValueError("need equally many, non-zero, candidates and references")
    return sum(rouge_l(c, r).f1 for c, r in zip(candidates, references)) / len(candidates)


def evaluation_report(candidates: list[str], references: list[str]) -> dict:
    """Corpus means plus per-example rows, ready to serialise as JSON."""
    if len(candidates) != len(references):
        raise ValueError("candidate and reference counts differ")
    corpus = corpus_rouge(list(zip(candidates, references)))
    examples = []
    for i, (c, r) in enumerate(zip(candidates, references)):
        scores = score_all(c, r)
        examples.append({"index": i, "candidate": c, "reference": r,
                         **{m: scores[m].f1 for m in METRICS}})
    return {
        "count": len(candidates),
        "corpus": {m: vars(s) for m, s in corpus.items()},
        "examples": examples,
    }
