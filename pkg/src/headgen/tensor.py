"""Dense float64 arrays with tape-based reverse-mode differentiation.

Every differentiable operation appends one record to the thread's current
:class:`Graph`.  Records only reference earlier records, so the backward
pass is a single sweep over the tape in reverse insertion order.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> loss = (w * w).sum()
    >>> grads = loss.backward()
    >>> w.grad
    array([2., 4.])
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "ShapeError",
    "ParameterError",
    "no_grad",
    "current_graph",
    "matmul",
    "softmax",
    "log_softmax",
    "masked_softmax",
    "layer_norm",
    "dropout",
    "embedding",
    "pick",
    "concat",
    "stack",
    "where",
    "relu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
]

LAYER_NORM_EPS = 1e-6


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(ValueError):
    """An operation hyper-parameter is outside its valid range."""


@dataclass
class _Node:
    op: str
    inputs: tuple[int | None, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None
    leaf: Tensor | None = None


@dataclass
class Graph:
    """Append-only tape of computation records for one forward pass.

    Use as a context manager to give a forward/backward pair its own tape;
    otherwise operations record onto a lazily created per-thread default.
    """

    nodes: list[_Node] = field(default_factory=list)
    _leaf_ids: dict[int, int] = field(default_factory=dict)

    def __enter__(self) -> Graph:
        _local().stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local().stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def reset(self) -> None:
        self.nodes.clear()
        self._leaf_ids.clear()

    def _id_of(self, t: Tensor) -> int:
        if t._graph is self and t._node is not None:
            return t._node
        if t._node is not None:
            raise RuntimeError("tensor was produced on a different (or consumed) graph")
        key = id(t)
        if key not in self._leaf_ids:
            self._leaf_ids[key] = len(self.nodes)
            self.nodes.append(_Node("leaf", (), None, leaf=t))
        return self._leaf_ids[key]

    def _record(self, op: str, parents: Sequence[Tensor], backward) -> int:
        ids = tuple(self._id_of(p) if p.requires_grad else None for p in parents)
        self.nodes.append(_Node(op, ids, backward))
        return len(self.nodes) - 1

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Propagate d(loss)/d(node) to every leaf that requires grad.

        Leaf gradients are accumulated into ``leaf.grad`` and also returned.
        The tape is cleared afterwards.
        """
        if loss.data.size != 1 or loss.data.ndim != 0:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._graph is not self or loss._node is None:
            raise RuntimeError("loss was not recorded on this graph")
        grads: list[np.ndarray | None] = [None] * (loss._node + 1)
        grads[loss._node] = np.ones((), dtype=np.float64)
        out: dict[Tensor, np.ndarray] = {}
        for i in range(loss._node, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            grads[i] = None
            if node.leaf is not None:
                leaf = node.leaf
                leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
                out[leaf] = leaf.grad
                continue
            for j, gj in zip(node.inputs, node.backward(g)):
                if j is None or gj is None:
                    continue
                grads[j] = gj if grads[j] is None else grads[j] + gj
        self.reset()
        return out


class _Local(threading.local):
    def __init__(self) -> None:
        self.stack: list[Graph] = []
        self.default = Graph()
        self.enabled = True


_state = _Local()


def _local() -> _Local:
    return _state


def current_graph() -> Graph:
    st = _local()
    return st.stack[-1] if st.stack else st.default


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording; results of operations never require grad."""
    st = _local()
    prev, st.enabled = st.enabled, False
    try:
        yield
    finally:
        st.enabled = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data)
    if _local().enabled and any(p.requires_grad for p in parents):
        graph = current_graph()
        out.requires_grad = True
        out._node = graph._record(op, parents, backward)
        out._graph = graph
    return out


class Tensor:
    """A float64 array that optionally records how it was computed."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "_graph", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64) if not (
            isinstance(data, np.ndarray) and data.dtype == np.float64
        ) else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: int | None = None
        self._graph: Graph | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def backward(self) -> dict[Tensor, np.ndarray]:
        if self._graph is None:
            raise RuntimeError("tensor is not part of a recorded computation")
        return self._graph.backward(self)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other) -> Tensor:
        other = _as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def bw(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return _make(self.data + other.data, (self, other), bw, "add")

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = _as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def bw(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return _make(self.data - other.data, (self, other), bw, "sub")

    def __rsub__(self, other) -> Tensor:
        return _as_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = _as_tensor(other)
        a, b = self.data, other.data

        def bw(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return _make(a * b, (self, other), bw, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = _as_tensor(other)
        a, b = self.data, other.data

        def bw(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return _make(a / b, (self, other), bw, "div")

    def __rtruediv__(self, other) -> Tensor:
        return _as_tensor(other) / self

    def __neg__(self) -> Tensor:
        return _make(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, k: float) -> Tensor:
        a = self.data

        def bw(g):
            return (g * k * a ** (k - 1),)

        return _make(a**k, (self,), bw, "pow")

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    # -- reductions and shape ------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return _make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a: int, b: int) -> Tensor:
        return _make(
            np.swapaxes(self.data, a, b), (self,), lambda g: (np.swapaxes(g, a, b),), "swapaxes"
        )

    @property
    def T(self) -> Tensor:
        return self.swapaxes(-1, -2)

    def __getitem__(self, idx) -> Tensor:
        shape = self.shape
        parts = idx if isinstance(idx, tuple) else (idx,)
        fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

        def bw(g):
            out = np.zeros(shape)
            if fancy:
                np.add.at(out, idx, g)
            else:
                out[idx] += g
            return (out,)

        return _make(self.data[idx], (self,), bw, "getitem")

    # -- elementwise ---------------------------------------------------
    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def tanh(self) -> Tensor:
        return tanh(self)

    def sigmoid(self) -> Tensor:
        return sigmoid(self)

    def relu(self) -> Tensor:
        return relu(self)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data
    if y.ndim == 2 and x.ndim > 2:
        # Fold leading axes into one GEMM; much faster than a batched matmul.
        x2 = x.reshape(-1, x.shape[-1])
        out_shape = x.shape[:-1] + (y.shape[1],)

        def bw2(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ y.T).reshape(x.shape), x2.T @ g2

        return _make((x2 @ y).reshape(out_shape), (a, b), bw2, "matmul")

    def bw(g):
        ga = g @ np.swapaxes(y, -1, -2)
        gb = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(ga, x.shape), _unbroadcast(gb, y.shape)

    return _make(x @ y, (a, b), bw, "matmul")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,), "exp")


def log(x: Tensor) -> Tensor:
    a = x.data
    return _make(np.log(a), (x,), lambda g: (g / a,), "log")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), bw, "log_softmax")


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to positions where ``mask`` is true.

    Rows with no admissible position come out as all zeros.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    z = np.where(mask, x.data, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(z - m), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    y = e / np.where(s > 0, s, 1.0)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), bw, "masked_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    a = x.data
    d = a.shape[-1]
    mu = a.mean(axis=-1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gv = gain.data

    def bw(g):
        dxhat = g * gv
        dx = rstd * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d
        )
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        return dx, dgain, dbias

    return _make(xhat * gv + bias.data, (x, gain, bias), bw, "layer_norm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; ``ids`` may have any integer shape."""
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return _make(table.data[ids], (table,), bw, "embedding")


def pick(x: Tensor, ids) -> Tensor:
    """``x[..., ids[...]]``: select one entry of the last axis per position."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != x.shape[:-1]:
        raise ShapeError(f"pick index shape {ids.shape} does not match {x.shape[:-1]}")
    shape = x.shape
    sel = np.take_along_axis(x.data, ids[..., None], axis=-1)[..., 0]

    def bw(g):
        out = np.zeros(shape)
        np.put_along_axis(out, ids[..., None], g[..., None], axis=-1)
        return (out,)

    return _make(sel, (x,), bw, "pick")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([x.data for x in xs], axis=axis), xs, bw, "concat")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [_as_tensor(x) for x in xs]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([x.data for x in xs], axis=axis), xs, bw, "stack")


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select with a constant boolean condition."""
    a, b = _as_tensor(a), _as_tensor(b)
    cond = np.asarray(cond, dtype=bool)

    def bw(g):
        return _unbroadcast(np.where(cond, g, 0.0), a.shape), _unbroadcast(np.where(cond, 0.0, g), b.shape)

    return _make(np.where(cond, a.data, b.data), (a, b), bw, "where")
