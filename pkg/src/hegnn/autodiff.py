"""A small reverse-mode differentiation tape over numpy arrays.

Operations on :class:`Var` objects that belong to a :class:`Tape` are
appended to it in execution order, so the tape is topologically sorted by
construction.  ``Var`` objects without a tape behave like plain arrays
(nothing is recorded), which lets the same model code run for inference.
The reverse sweep visits nodes in exactly the reverse recording order, so
gradient accumulation order is fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Tape:
    def __init__(self):
        self.nodes = []  # (output Var, parents, vjp)

    def __len__(self):
        return len(self.nodes)

    def variable(self, value):
        """A differentiable leaf on this tape."""
        return Var(np.array(value, dtype=float), tape=self)


class Var:
    __array_priority__ = 1000

    def __init__(self, value, tape=None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=float)
        self.tape = tape

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)

    def __repr__(self):
        return f"Var({self.value!r}, recorded={self.tape is not None})"

    def __len__(self):
        return len(self.value)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=float))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=float))


def custom_op(value, parents, vjp):
    """Record ``value`` computed from ``parents``; ``vjp(g)`` returns one gradient per parent.

    Exposed so callers can register extra primitives (and so tests can
    build deliberately wrong ones).
    """
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ValueError("operands live on different tapes")
            tape = p.tape
    out = Var(value, tape)
    if tape is not None:
        tape.nodes.append((out, parents, vjp))
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_var(a), as_var(b)
    return custom_op(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    a = as_var(a)
    return custom_op(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    return custom_op(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b):
    """``a @ b`` for ``a`` of shape ``(..., k)`` and a 2-D ``b`` of shape ``(k, n)``."""
    a, b = as_var(a), as_var(b)
    if b.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")

    def vjp(g):
        ga = g @ b.value.T
        gb = a.value.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return custom_op(a.value @ b.value, (a, b), vjp)


def sum_(a, axis=None, keepdims=False):
    a = as_var(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return custom_op(np.asarray(out, dtype=float), (a,), vjp)


def mean(a, axis=None):
    a = as_var(a)
    n = a.value.size if axis is None else a.shape[axis]
    return sum_(a, axis) / n


def reshape(a, shape):
    a = as_var(a)
    return custom_op(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def take(a, index):
    """Basic or advanced indexing; repeated indices accumulate in the backward pass."""
    a = as_var(a)

    def vjp(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, index, g)
        return (ga,)

    return custom_op(a.value[index], (a,), vjp)


def concat(parts, axis=-1):
    parts = [as_var(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return custom_op(
        np.concatenate([p.value for p in parts], axis=axis),
        tuple(parts),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def scatter_add(a, index, n):
    """Sum rows of ``a`` into ``n`` buckets given by ``index`` (the segment-sum)."""
    a = as_var(a)
    index = np.asarray(index)
    out = np.zeros((n,) + a.shape[1:])
    np.add.at(out, index, a.value)
    return custom_op(out, (a,), lambda g: (g[index],))


def silu(a):
    """x * sigmoid(x)."""
    a = as_var(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))  # overflow-free sigmoid
    out = a.value * s
    return custom_op(out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


def square(a):
    a = as_var(a)
    return custom_op(a.value**2, (a,), lambda g: (2.0 * g * a.value,))


def sqrt(a):
    a = as_var(a)
    out = np.sqrt(a.value)
    return custom_op(out, (a,), lambda g: (0.5 * g / out,))


def inner(a, b, axis=-1):
    """Inner product along ``axis``."""
    return sum_(mul(a, b), axis=axis)


def norm(a, axis=-1):
    return sqrt(sum_(square(a), axis=axis))


def grad(tape, loss, params):
    """Reverse accumulation of ``d loss / d p`` for each ``p`` in ``params``.

    Parameters the loss does not depend on receive zero gradients.
    """
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    if loss.value.size != 1:
        raise ValueError("loss must be scalar-valued")
    adj = {id(loss): np.ones_like(loss.value)}
    for out, parents, vjp in reversed(tape.nodes):
        g = adj.pop(id(out), None)
        if g is None:
            continue
        for p, gp in zip(parents, vjp(g)):
            if p.tape is None or gp is None:
                continue
            k = id(p)
            adj[k] = adj[k] + gp if k in adj else gp
    single = isinstance(params, Var)
    plist = [params] if single else list(params)
    grads = [adj.get(id(p), np.zeros_like(p.value)) for p in plist]
    return grads[0] if single else grads


# --------------------------------------------------------------------------- optimizer

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 50
    epochs: int = 100
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam moments must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")


class Adam:
    def __init__(self, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = params  # dict name -> array, updated in place
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k in sorted(self.params):
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * self.params[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            self.params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# --------------------------------------------------------------------------- finite differences

def grad_check(fn, params, seed=0, n_dirs=20, step=1e-6):
    """Compare tape gradients with central differences along random directions.

    ``fn(values)`` maps a dict of arrays (wrapped as ``Var`` leaves when
    recording) to a scalar ``Var``.  Returns the relative error
    ``|fd - ad| / max(|fd|, |ad|)`` taken over the vector of ``n_dirs``
    directional derivatives.
    """
    rng = np.random.default_rng(seed)
    names = sorted(params)
    tape = Tape()
    leaves = {k: tape.variable(params[k]) for k in names}
    loss = fn(leaves)
    grads = dict(zip(names, grad(tape, loss, [leaves[k] for k in names])))

    ad, fd = [], []
    for _ in range(n_dirs):
        d = {k: rng.standard_normal(params[k].shape) for k in names}
        ad.append(sum(float((grads[k] * d[k]).sum()) for k in names))
        plus = fn({k: Var(params[k] + step * d[k]) for k in names}).value
        minus = fn({k: Var(params[k] - step * d[k]) for k in names}).value
        fd.append(float((plus - minus) / (2 * step)))
    ad, fd = np.array(ad), np.array(fd)
    denom = max(np.linalg.norm(ad), np.linalg.norm(fd), 1e-300)
    return float(np.linalg.norm(ad - fd) / denom)
