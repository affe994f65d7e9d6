"""
Reverse-mode autodiff on a tape
===============================

Every differentiable operation appends a record to a global tape. ``backward``
walks the tape in reverse and then clears it, so each forward pass can be
differentiated exactly once.
"""

import numpy as np

from cbqg import tensor as T
from cbqg.tensor import Tensor

# d(x^2)/dx at x = 3
x = Tensor([3.0], requires_grad=True)
T.backward((x * x).sum())
print("grad of x^2 at 3:", x.grad)

# softmax sums to one, so the gradient of its sum vanishes
v = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
T.backward(T.softmax(v).sum())
print("grad of sum(softmax(v)):", v.grad)

# a small two-layer classifier, checked against central differences
rng = np.random.default_rng(0)
inputs = Tensor(rng.normal(size=(5, 4)))
w1 = Tensor(rng.normal(size=(4, 6)) * 0.5, requires_grad=True)
w2 = Tensor(rng.normal(size=(6, 3)) * 0.5, requires_grad=True)
labels = np.array([0, 2, 1, 1, 0])


def loss():
    hidden = T.relu(inputs @ w1)
    return T.gather_nll(T.log_softmax(hidden @ w2), labels)


print("max relative error vs finite differences:", T.gradcheck(loss, [w1, w2]))

# the tape refuses to run backward twice on the same graph
out = loss()
T.backward(out)
try:
    T.backward(out)
except Exception as exc:  # TapeStateError
    print("second backward:", type(exc).__name__)
