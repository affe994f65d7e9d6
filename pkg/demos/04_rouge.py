"""
ROUGE scores
============

Tokens are lowercased alphanumeric runs. ROUGE-L uses the longest common
subsequence; ROUGE-Lsum splits on newlines and unions the LCS matches of each
reference sentence over all candidate sentences.
"""

from cbqg.rouge import corpus_rouge, score_all

cases = [
    ("the cat sat", "the cat"),
    ("a c b", "a b c"),
    ("police killed the gunman", "police kill the gunman"),
    ("c d\na b", "a b c d"),
]
for cand, ref in cases:
    scores = score_all(cand, ref)
    row = "  ".join(f"{m}={s.f1:.3f}" for m, s in scores.items())
    print(f"{cand!r:32} vs {ref!r:28} {row}")

# sentence order is ignored by Lsum but not by L
print(corpus_rouge(cases)["rougeLsum"])
