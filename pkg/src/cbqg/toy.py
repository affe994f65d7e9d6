"""Synthetic invertible QA task for smoke tests and demos.

Answers are random runs of 3-8 words drawn from a 25-word alphabet; the
question is the answer with every word passed through a fixed permutation,
so both directions (answer -> question, question -> answer) are learnable
and exactly recoverable. Together with the five special tokens the
vocabulary has exactly 30 entries.
"""

from __future__ import annotations

import numpy as np

from .data import QAPair

WORDS = tuple(f"w{i:02d}" for i in range(25))


def toy_pairs(n: int, seed: int = 0, min_len: int = 3, max_len: int = 8) -> list[QAPair]:
    rng = np.random.default_rng(seed)
    perm = np.random.default_rng(12345).permutation(len(WORDS))
    pairs = []
    for _ in range(n):
        ids = rng.integers(0, len(WORDS), size=rng.integers(min_len, max_len + 1))
        answer = " ".join(WORDS[i] for i in ids)
        question = " ".join(WORDS[perm[i]] for i in ids)
        pairs.append(QAPair(question, answer))
    return pairs
