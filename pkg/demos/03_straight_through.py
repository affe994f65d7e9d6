"""
Straight-through Gumbel-Softmax
===============================

The forward pass emits exact one-hot rows (the argmax of log p + g), while the
backward pass uses the gradient of the relaxed softmax((log p + g) / tau).
This is what lets the answer-reconstruction loss reach the question
generator's logits through discrete tokens.
"""

import numpy as np

from cbqg import tensor as T
from cbqg.reconstruction import gumbel_softmax, sample_gumbel, st_gumbel_softmax
from cbqg.tensor import Tensor

rng = np.random.default_rng(0)
raw = rng.normal(size=(3, 6))
noise = sample_gumbel(raw.shape, rng)
weights = rng.normal(size=raw.shape)

logits = Tensor(raw, requires_grad=True)
q = st_gumbel_softmax(logits, tau=0.5, rng=rng, noise=noise)
print("forward rows:\n", q.onehot.data)
T.backward((q.onehot * weights).sum())

soft_logits = Tensor(raw, requires_grad=True)
T.backward((gumbel_softmax(soft_logits, 0.5, noise) * weights).sum())
print("ST grad == soft grad:", np.array_equal(logits.grad, soft_logits.grad))

# temperature only sharpens the relaxed rows; the winner never moves
for tau in (0.05, 1.0, 20.0):
    soft = gumbel_softmax(Tensor(raw), tau, noise).data
    print(f"tau={tau:>5}: max prob {soft.max(-1).round(3)}, index {soft.argmax(-1)}")

# Gumbel noise has mean equal to the Euler-Mascheroni constant
print("mean of 1e5 Gumbel draws:", sample_gumbel(100_000, rng).mean().round(4))
