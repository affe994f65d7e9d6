"""
NT-Xent over [CLS] embeddings
=============================

Each answer embedding is pulled towards its positive view and pushed away
from the other 2N - 2 views in the batch. Two closed forms are easy to check:
one pair gives zero loss, and a batch where every similarity is equal gives
ln(2N - 1).
"""

import math

import numpy as np

from cbqg.config import ModelConfig
from cbqg.contrastive import EmbeddingBatch, make_positives, nt_xent_loss
from cbqg.data import QAPair, build_vocab
from cbqg.model import Seq2Seq
from cbqg.tensor import Tensor

rng = np.random.default_rng(0)
one = EmbeddingBatch(Tensor(rng.normal(size=(1, 8))), Tensor(rng.normal(size=(1, 8))))
print("N=1:", nt_xent_loss(one).item())

for n in (2, 4, 8):
    flat = EmbeddingBatch(Tensor(np.ones((n, 8))), Tensor(np.ones((n, 8))))
    print(f"N={n}: {nt_xent_loss(flat).item():.6f} vs ln(2N-1) = {math.log(2 * n - 1):.6f}")

# positives from a real (untrained) encoder: the ground-truth question (CL_t)
# or a second dropout pass over the answer (CL_s)
pairs = [
    QAPair("how do i descale a kettle?", "fill it with equal parts vinegar and water then boil it"),
    QAPair("why does bread go stale?", "starch molecules recrystallise and push moisture out of the crumb"),
    QAPair("when should i repot a cactus?", "repot in spring when the roots fill the pot completely"),
]
vocab = build_vocab([p.question for p in pairs] + [p.answer for p in pairs], 100)
model = Seq2Seq(ModelConfig(num_layers=1, d_model=32, num_heads=4, ffn_dim=64,
                            vocab_size=len(vocab), max_src_len=32, max_tgt_len=32))
for strategy in ("CL_t", "CL_s"):
    batch = make_positives(pairs, strategy, model, vocab, rng=np.random.default_rng(1))
    print(strategy, "loss on an untrained encoder:", round(nt_xent_loss(batch).item(), 4))
