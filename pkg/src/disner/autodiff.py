"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Node` wraps a numpy array and remembers how it was produced; calling
:func:`backward` on a scalar node accumulates gradients into every reachable
parameter.  The operation set is exactly what a BiLSTM encoder and a
linear-chain CRF need, plus the Adam optimizer and gradient utilities.

Every operation checks its output for NaN/Inf and raises
:class:`~disner.errors.NonFiniteError` at the first offending op.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError


class Node:
    """A value in the computation graph.

    ``parents`` holds ``(node, vjp)`` pairs; each ``vjp`` maps the upstream
    gradient to this parent's gradient contribution.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "name")

    def __init__(self, value, parents=(), requires_grad=False, name=""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in self.parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Node{label} shape={self.value.shape}>"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_node(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def param(value, name: str = "") -> Node:
    """A trainable leaf (gradients accumulate here)."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value, name: str = "") -> Node:
    return Node(np.asarray(value, dtype=np.float64), name=name)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(value, parents, op: str) -> Node:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")
    live = tuple((p, fn) for p, fn in parents if p.requires_grad)
    return Node(arr, live)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None
    return _make(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                       (b, lambda g: _unbroadcast(g, b.shape))], "add")


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        out = a.value - b.value
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from None
    return _make(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                       (b, lambda g: _unbroadcast(-g, b.shape))], "sub")


def neg(a) -> Node:
    a = as_node(a)
    return _make(-a.value, [(a, lambda g: -g)], "neg")


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        out = a.value * b.value
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None
    return _make(out, [(a, lambda g: _unbroadcast(g * b.value, a.shape)),
                       (b, lambda g: _unbroadcast(g * a.value, b.shape))], "mul")


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return _make(av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)], "matmul")
    if av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return _make(av @ bv, [(a, lambda g: np.outer(g, bv)), (b, lambda g: av.T @ g)], "matmul")
    if av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return _make(av @ bv, [(a, lambda g: bv @ g), (b, lambda g: np.outer(av, g))], "matmul")
    raise ShapeError(f"matmul: unsupported ranks {av.shape} @ {bv.shape}")


def sigmoid(a) -> Node:
    a = as_node(a)
    out = 1.0 / (1.0 + np.exp(-a.value))
    return _make(out, [(a, lambda g: g * out * (1.0 - out))], "sigmoid")


def tanh(a) -> Node:
    a = as_node(a)
    out = np.tanh(a.value)
    return _make(out, [(a, lambda g: g * (1.0 - out * out))], "tanh")


def concat(nodes, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat of zero nodes")
    out = np.concatenate([n.value for n in nodes], axis=axis)
    parents = []
    offset = 0
    for n in nodes:
        width = n.value.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offset, offset + width)
        parents.append((n, (lambda s: lambda g: g[tuple(s)])(tuple(sl))))
        offset += width
    return _make(out, parents, "concat")


def lookup(table: Node, indices) -> Node:
    """Row gather: table [V × d], indices [m] → output [m × d]."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or table.value.ndim != 2:
        raise ShapeError(f"lookup: table {table.shape}, indices {idx.shape}")

    def vjp(g):
        z = np.zeros_like(table.value)
        np.add.at(z, idx, g)
        return z

    return _make(table.value[idx], [(table, vjp)], "lookup")


def take(a, key) -> Node:
    a = as_node(a)
    out = a.value[key]

    def vjp(g):
        z = np.zeros_like(a.value)
        if isinstance(key, (np.ndarray, list)) or (
                isinstance(key, tuple) and any(isinstance(k, (np.ndarray, list)) for k in key)):
            np.add.at(z, key, g)
        else:
            z[key] += g
        return z

    return _make(out, [(a, vjp)], "take")


def reshape(a, shape) -> Node:
    a = as_node(a)
    old = a.shape
    return _make(a.value.reshape(shape), [(a, lambda g: g.reshape(old))], "reshape")


def transpose(a) -> Node:
    a = as_node(a)
    return _make(a.value.T, [(a, lambda g: g.T)], "transpose")


def reduce_sum(a, axis=None) -> Node:
    a = as_node(a)
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()

    return _make(out, [(a, vjp)], "sum")


def logsumexp(a, axis=None) -> Node:
    """Numerically stable log Σ exp along ``axis`` (None → over all entries)."""
    a = as_node(a)
    m = np.max(a.value, axis=axis, keepdims=True)
    out_keep = m + np.log(np.sum(np.exp(a.value - m), axis=axis, keepdims=True))
    out = np.squeeze(out_keep, axis=axis) if axis is not None else out_keep.reshape(())

    soft = np.exp(a.value - out_keep)

    def vjp(g):
        if axis is None:
            return g * soft
        return np.expand_dims(g, axis) * soft

    return _make(out, [(a, vjp)], "logsumexp")


def reduce_max(a, axis=None) -> tuple[Node, np.ndarray]:
    """Max value (differentiable) and argmax indices; first index wins ties."""
    a = as_node(a)
    arg = np.argmax(a.value, axis=axis)
    out = np.max(a.value, axis=axis)

    def vjp(g):
        z = np.zeros_like(a.value)
        if axis is None:
            z.flat[arg] = g
        else:
            np.put_along_axis(z, np.expand_dims(arg, axis),
                              np.expand_dims(g, axis), axis)
        return z

    return _make(out, [(a, vjp)], "max"), arg


def dropout(a: Node, rate: float, rng: np.random.Generator, training: bool) -> Node:
    """Inverted dropout: zero with probability ``rate``, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.value.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return _make(a.value * keep, [(a, lambda g: g * keep)], "dropout")


def backward(loss: Node) -> None:
    """Populate ``grad`` on every parameter reachable from a scalar loss."""
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contribution = vjp(g)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contribution


def zero_grads(params) -> None:
    nodes = params.values() if isinstance(params, dict) else params
    for p in nodes:
        p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    nodes = list(params.values() if isinstance(params, dict) else params)
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad))
                          for p in nodes if p.grad is not None))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for p in nodes:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    """Adam with bias correction and per-epoch learning-rate decay.

    Effective learning rate at epoch e is ``lr · decay**e``.
    """

    def __init__(self, params: dict[str, Node], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 decay: float = 0.9):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.epoch = 0
        self.step_count = 0
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    @property
    def effective_lr(self) -> float:
        return self.lr * self.decay ** self.epoch

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        lr = self.effective_lr
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.value)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1 ** t)
            v_hat = self.v[name] / (1 - self.beta2 ** t)
            p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_grads(self.params)


def gradient_check(build_loss, params: dict[str, Node], h: float = 1e-5) -> float:
    """Max relative error of analytic vs central-finite-difference gradients.

    ``build_loss`` must rebuild the loss graph from the current parameter
    values on every call (no stochastic ops unless identically seeded).
    """
    zero_grads(params)
    backward(build_loss())
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
                for k, p in params.items()}
    worst = 0.0
    for k, p in params.items():
        flat = p.value.reshape(-1)
        an_flat = analytic[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(build_loss().value)
            flat[i] = orig - h
            lo = float(build_loss().value)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * h)
            err = abs(fd - an_flat[i]) / max(1.0, abs(fd), abs(an_flat[i]))
            worst = max(worst, err)
    return worst
