"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def init_state(params: list[np.ndarray]) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float,
              beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS) -> list[np.ndarray]:
    """One Adam update; returns new parameter arrays and advances ``state`` in place.

    A ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state have different lengths")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p) if g is None else g
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        out.append(p - lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + eps))
    return out


class Adam:
    def __init__(self, tensors, lr: float):
        self.tensors = list(tensors)
        self.lr = lr
        self.state = init_state([t.data for t in self.tensors])

    def step(self):
        new = adam_step([t.data for t in self.tensors], [t.grad for t in self.tensors],
                        self.state, self.lr)
        for t, data in zip(self.tensors, new):
            t.data = data
            t.grad = None
