"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array.  When any input of an operation
requires a gradient (and recording is enabled) the result carries a node
holding the parents and a closure computing the input gradients.  Nodes are
numbered in creation order, so :func:`backward` can replay them in exact
reverse topological order.  The graph is released after the backward pass.

Broadcasting is deliberately limited to scalar-vs-tensor; anything richer goes
through :meth:`Tensor.broadcast_to` so every backward rule is unambiguous.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Sequence

import numpy as np

from .exceptions import NonFinite, NotScalar, ShapeMismatch

_DTYPES = (np.float32, np.float64)
_counter = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class _Node:
    __slots__ = ("seq", "op", "parents", "backward")

    def __init__(self, op: str, parents: tuple, backward: Callable):
        self.seq = next(_counter)
        self.op = op
        self.parents = parents
        self.backward = backward


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in _DTYPES:
        return arr
    return arr.astype(np.float32)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = _as_float_array(data, dtype)
        if self.data.dtype not in _DTYPES:
            raise TypeError(f"unsupported dtype {self.data.dtype}")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None
        self.name = name

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> tuple:
        return self.data.shape

    dims = shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise NotScalar(f"tensor has {self.data.size} elements")

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return len(self.data)

    # -------------------------------------------------------------- autodiff
    def backward(self) -> None:
        backward(self)

    # --------------------------------------------------------------- algebra
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def __pow__(self, p):
        return power(self, p)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def broadcast_to(self, shape):
        return broadcast_to(self, shape)


# ---------------------------------------------------------------- plumbing


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_op(op: str, data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap ``data`` as the output of ``op``; record a node when needed.

    ``backward_fn(g)`` must return one gradient (or ``None``) per parent.
    """
    if data.dtype not in _DTYPES:
        data = data.astype(parents[0].dtype if parents else np.float32)
    if not np.isfinite(data).all():
        raise NonFinite(f"{op} produced non-finite values")
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(op, tuple(parents), backward_fn)
    return out


def _scalar_or_tensor(a: Tensor, b):
    if isinstance(b, Tensor):
        if b.shape == a.shape:
            return b, False
        if b.data.ndim == 0 or b.data.size == 1 and b.ndim <= 1:
            return b, True
        if a.data.ndim == 0 or a.data.size == 1 and a.ndim <= 1:
            return b, True
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} are not compatible "
                            "(only scalar broadcasting is supported)")
    return None, True


def _reduce_like(g: np.ndarray, target: Tensor) -> np.ndarray:
    if g.shape == target.shape:
        return g
    return np.asarray(g.sum()).reshape(target.shape).astype(target.dtype)


def add(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        return make_op("add", a.data + np.asarray(b, dtype=a.dtype), (a,), lambda g: (g,))
    bt, _ = _scalar_or_tensor(a, b)
    return make_op("add", a.data + bt.data, (a, bt),
                   lambda g: (_reduce_like(g, a), _reduce_like(g, bt)))


def neg(a: Tensor) -> Tensor:
    return make_op("neg", -a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        return add(a, -np.asarray(b))
    bt, _ = _scalar_or_tensor(a, b)
    return make_op("sub", a.data - bt.data, (a, bt),
                   lambda g: (_reduce_like(g, a), _reduce_like(-g, bt)))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        s = np.asarray(b, dtype=a.dtype)
        return make_op("mul", a.data * s, (a,), lambda g: (g * s,))
    bt, _ = _scalar_or_tensor(a, b)
    ad, bd = a.data, bt.data
    return make_op("mul", ad * bd, (a, bt),
                   lambda g: (_reduce_like(g * bd, a), _reduce_like(g * ad, bt)))


def div(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / np.asarray(b, dtype=a.dtype))
    bt, _ = _scalar_or_tensor(a, b)
    ad, bd = a.data, bt.data
    return make_op("div", ad / bd, (a, bt),
                   lambda g: (_reduce_like(g / bd, a), _reduce_like(-g * ad / (bd * bd), bt)))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return make_op("pow", ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul needs [m,k]x[k,n], got {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return make_op("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    src = a.shape
    return make_op("reshape", out, (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_op("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    """Explicit broadcast; gradient sums over the expanded axes."""
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    src = a.shape
    lead = len(shape) - len(src)

    def bw(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, s in enumerate(src) if s == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return make_op("broadcast_to", np.ascontiguousarray(out), (a,), bw)


def pad(a: Tensor, widths) -> Tensor:
    """Zero-pad; ``widths`` is a per-axis sequence of ``(before, after)``."""
    widths = tuple((int(b), int(e)) for b, e in widths)
    if len(widths) != a.ndim:
        raise ShapeMismatch(f"pad widths for {len(widths)} axes, tensor has {a.ndim}")
    sl = tuple(slice(b, b + n) for (b, _), n in zip(widths, a.shape))
    return make_op("pad", np.pad(a.data, widths), (a,), lambda g: (g[sl],))


def slice_(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    src_shape, dtype = a.shape, a.dtype

    def bw(g):
        full = np.zeros(src_shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return make_op("slice", np.array(out, copy=True), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return make_op("concat", out, tensors, bw)


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)
    src = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).astype(a.dtype),)

    return make_op("sum", out, (a,), bw)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(reduce_sum(a, axis, keepdims), 1.0 / n)


def reduce_max(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.asarray(a.data.max(axis=axis, keepdims=True), dtype=a.dtype)
    mask = a.data == out
    # ties share the gradient evenly
    mask = mask / mask.sum(axis=axis, keepdims=True)
    res = out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis))

    def bw(g):
        if not keepdims:
            g = np.asarray(g).reshape(out.shape)
        return ((mask * g).astype(a.dtype),)

    return make_op("max", res, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return make_op("log", out, (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_op("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_op("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", out, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def bw(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return make_op("log_softmax", out, (a,), bw)


# ---------------------------------------------------------------- backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None:
        if loss.requires_grad:
            loss.grad = (loss.grad if loss.grad is not None else 0) + np.ones_like(loss.data)
        return

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._node is None or id(t) in nodes:
            continue
        nodes[id(t)] = t
        stack.extend(p for p in t._node.parents if p.requires_grad)

    order = sorted(nodes.values(), key=lambda t: t._node.seq, reverse=True)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in order:
        g = grads.pop(id(t), None)
        node = t._node
        t._node = None
        if g is None:
            continue
        in_grads = node.backward(g)
        for p, pg in zip(node.parents, in_grads):
            if pg is None or not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.dtype)
            if pg.shape != p.shape:
                pg = pg.reshape(p.shape)
            if p._node is not None:
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
            else:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
