"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every differentiable operation appends a record to the active :class:`Tape`
when at least one input requires a gradient. :func:`backward` walks the tape
once in reverse order, accumulates gradients into ``.grad`` and clears the
tape, so one tape lives for exactly one training step.

Supported primitives: add, sub, mul, matmul, softmax, log_softmax,
layer_norm, embedding, concat, slicing, sum/mean, cosine_similarity,
gather_nll, plus the shape plumbing (reshape, transpose), relu and the
straight-through identity used by the Gumbel estimator.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, TapeStateError

DTYPE = np.float64


@dataclass
class TapeRecord:
    kind: str
    inputs: tuple
    out: "Tensor"
    backward: Callable


@dataclass
class Tape:
    records: list = field(default_factory=list)
    generation: int = 0

    def record(self, kind, inputs, out, backward_fn):
        out.node_id = len(self.records)
        out._gen = self.generation
        self.records.append(TapeRecord(kind, tuple(inputs), out, backward_fn))

    def clear(self):
        self.records = []
        self.generation += 1

    def owns(self, t: "Tensor") -> bool:
        return (
            t.node_id is not None
            and t._gen == self.generation
            and t.node_id < len(self.records)
            and self.records[t.node_id].out is t
        )


_tape = Tape()
_grad_enabled = True


def active_tape() -> Tape:
    return _tape


def reset_tape():
    """Drop every record on the active tape (e.g. after an aborted step)."""
    _tape.clear()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "_gen")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = None
        self._gen = -1

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self.data.reshape(-1)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a constant")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, kind: str, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _tape.record(kind, inputs, out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for a {ndim}-d tensor")
    return axis % ndim


# elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _make(a.data + b.data, "add", (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _make(a.data - b.data, "sub", (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _make(a.data * b.data, "mul", (a, b), bw)


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def bw(g):
        return (g * pos,)

    return _make(np.where(pos, a.data, 0.0), "relu", (a,), bw)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout, composed as a multiply by a constant mask."""
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


def straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    """Forward ``hard`` exactly; route the incoming gradient to ``soft`` unchanged."""
    hard = np.asarray(hard, dtype=DTYPE)
    if hard.shape != soft.shape:
        raise ValueError(f"shape mismatch {hard.shape} vs {soft.shape}")

    def bw(g):
        return (g,)

    return _make(hard.copy(), "straight_through", (soft,), bw)


# linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(a.data @ b.data, "matmul", (a, b), bw)


# normalisation ------------------------------------------------------------


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    axis = _check_axis(axis, t.ndim)
    e = np.exp(t.data - t.data.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, "softmax", (t,), bw)


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    axis = _check_axis(axis, t.ndim)
    z = t.data - t.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, "log_softmax", (t,), bw)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = t.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"gain/bias must have shape ({d},)")
    x = t.data
    centred = x - x.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv_std

    def bw(g):
        gx = gg = gb = None
        if t.requires_grad:
            dxhat = g * gain.data
            gx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        return gx, gg, gb

    return _make(xhat * gain.data + bias.data, "layer_norm", (t, gain, bias), bw)


# indexing and shape -------------------------------------------------------


def embedding(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ValueError("token id out of range for the embedding table")

    def bw(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (gw,)

    return _make(weight.data[ids], "embedding", (weight,), bw)


def take(t: Tensor, idx) -> Tensor:
    """Basic or advanced indexing (``t[idx]``)."""

    def bw(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(t.data[idx], "slice", (t,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(x) for x in tensors]
    axis = _check_axis(axis, tensors[0].ndim)
    cuts = np.cumsum([x.shape[axis] for x in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([x.data for x in tensors], axis=axis), "concat", tensors, bw)


def reshape(t: Tensor, shape) -> Tensor:
    src = t.shape

    def bw(g):
        return (g.reshape(src),)

    return _make(t.data.reshape(shape), "reshape", (t,), bw)


def transpose(t: Tensor, axes=None) -> Tensor:
    axes = tuple(range(t.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inverse),)

    return _make(t.data.transpose(axes), "transpose", (t,), bw)


# reductions ---------------------------------------------------------------


def sum_(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = t.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(t.data.sum(axis=axis, keepdims=keepdims), "sum", (t,), bw)


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = t.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([t.shape[a] for a in axes]))
    return mul(sum_(t, axis, keepdims), 1.0 / n)


def cosine_similarity(a, b) -> Tensor:
    """Cosine similarity along the last axis; leading axes broadcast.

    Raises DomainError on any zero-norm vector rather than returning 0.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1] or a.shape[-1] < 1:
        raise ValueError(f"vector lengths differ: {a.shape} vs {b.shape}")
    na = np.sqrt((a.data**2).sum(axis=-1, keepdims=True))
    nb = np.sqrt((b.data**2).sum(axis=-1, keepdims=True))
    if np.any(na == 0) or np.any(nb == 0):
        raise DomainError("cosine similarity undefined for a zero-norm vector")
    dot = (a.data * b.data).sum(axis=-1, keepdims=True)
    cos = dot / (na * nb)

    def bw(g):
        g = g[..., None]
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g * (b.data / (na * nb) - cos * a.data / na**2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(g * (a.data / (na * nb) - cos * b.data / nb**2), b.shape)
        return ga, gb

    return _make(cos[..., 0], "cosine_similarity", (a, b), bw)


def gather_nll(logp: Tensor, targets, mask=None) -> Tensor:
    """Mean of ``-logp[..., target]`` over positions where ``mask`` is true."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logp.shape[:-1]:
        raise ValueError(f"targets shape {targets.shape} does not match {logp.shape[:-1]}")
    mask = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no unmasked target positions")
    v = logp.shape[-1]
    rows = np.flatnonzero(mask.reshape(-1))
    cols = targets.reshape(-1)[rows]
    picked = logp.data.reshape(-1, v)[rows, cols]

    def bw(g):
        full = np.zeros((targets.size, v))
        full[rows, cols] = -g / count
        return (full.reshape(logp.shape),)

    return _make(np.asarray(-picked.sum() / count), "gather_nll", (logp,), bw)


# differentiation -----------------------------------------------------------


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor that requires it.

    The tape is consumed: it is cleared afterwards, whether or not the loss
    depended on every record.
    """
    tape = _tape
    if not tape.owns(loss):
        raise TapeStateError("loss was not produced by the active tape")
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    try:
        for rec in reversed(tape.records[: loss.node_id + 1]):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            rec.out.grad = g
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if tape.owns(t):
                    key = id(t)
                    grads[key] = gi if key not in grads else grads[key] + gi
                else:
                    t.grad = np.array(gi) if t.grad is None else t.grad + gi
    finally:
        tape.clear()


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar ``fn()`` with respect to ``t``."""
    t.data = np.ascontiguousarray(t.data)
    out = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn().item()
            flat[i] = orig - eps
            lo = fn().item()
            flat[i] = orig
            out.reshape(-1)[i] = (hi - lo) / (2 * eps)
    return out


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
              floor: float = 1e-4) -> float:
    """Largest elementwise relative error between analytic and numerical gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    gradients that are zero up to rounding from producing 0/0.
    """
    for p in params:
        p.grad = None
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        numeric = numerical_grad(fn, p, eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
