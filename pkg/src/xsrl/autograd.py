"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable primitive returns a new :class:`Tensor` whose ``_node``
records its inputs and a local backward rule. :func:`backward` orders the
recorded nodes topologically (the tape) and walks them once in reverse.
Nodes are only recorded when at least one input requires a gradient, and
never inside :func:`no_grad`.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


class ShapeError(ValueError):
    pass


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("inputs", "backward_fn", "op")

    def __init__(self, op: str, inputs: tuple, backward_fn: Callable):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flattened view of the data."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, scalar_affine(_lift(other), -1.0))

    def __neg__(self):
        return scalar_affine(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_affine(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


def _make(op: str, data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, inputs, backward_fn)
    return out


def _mismatch(op: str, a, b):
    return ShapeError(f"{op}: shape mismatch {tuple(a)} vs {tuple(b)}")


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2) or A.shape[-1] != B.shape[0]:
        raise _mismatch("matmul", A.shape, B.shape)
    out = A @ B

    def bw(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 1 and B.ndim == 2:
            return B @ g, np.outer(A, g)
        if A.ndim == 2 and B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g * B, g * A

    return _make("matmul", out, (a, b), bw)


def _broadcast_kind(op: str, A: np.ndarray, B: np.ndarray) -> str:
    if A.shape == B.shape:
        return "same"
    if B.ndim == 1 and A.ndim == 2 and A.shape[1] == B.shape[0]:
        return "row"
    if B.ndim == 2 and A.ndim == 2 and B.shape == (A.shape[0], 1):
        return "col"
    if B.size == 1 and B.ndim <= 1:
        return "scalar"
    raise _mismatch(op, A.shape, B.shape)


def _reduce_to(g: np.ndarray, kind: str, shape) -> np.ndarray:
    if kind == "same":
        return g
    if kind == "row":
        return g.sum(axis=0)
    if kind == "col":
        return g.sum(axis=1, keepdims=True)
    return np.asarray(g.sum()).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a row bias, a column vector or a scalar."""
    kind = _broadcast_kind("add", a.data, b.data)
    bshape = b.data.shape
    return _make("add", a.data + b.data, (a, b), lambda g: (g, _reduce_to(g, kind, bshape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    kind = _broadcast_kind("mul", A, B)
    return _make("mul", A * B, (a, b), lambda g: (g * B, _reduce_to(g * A, kind, B.shape)))


def scalar_affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    return _make("scalar_affine", x.data * scale + shift, (x,), lambda g: (g * scale,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat: no inputs")
    arrays = [t.data for t in tensors]
    ax = axis % arrays[0].ndim
    for arr in arrays[1:]:
        if arr.ndim != arrays[0].ndim or any(
            arr.shape[d] != arrays[0].shape[d] for d in range(arr.ndim) if d != ax
        ):
            raise _mismatch("concat", arrays[0].shape, arr.shape)
    sizes = np.cumsum([arr.shape[ax] for arr in arrays])[:-1]
    out = np.concatenate(arrays, axis=ax)
    return _make("concat", out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=ax)))


def sigmoid(x: Tensor) -> Tensor:
    X = x.data
    s = np.empty_like(X)
    pos = X >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-X[pos]))
    ex = np.exp(X[~pos])
    s[~pos] = ex / (1.0 + ex)
    return _make("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _make("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    X = x.data
    out = np.maximum(X, 0.0) + np.log1p(np.exp(-np.abs(X)))
    s = sigmoid(Tensor(X)).data
    return _make("softplus", out, (x,), lambda g: (g * s,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    X = x.data
    e = np.exp(X - X.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make("softmax", p, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    X = x.data
    shifted = X - X.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return _make("log_softmax", out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def sum_all(x: Tensor) -> Tensor:
    shape = x.data.shape
    return _make("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def sum_over(x: Tensor, sets) -> Tensor:
    """Sum rows of ``x`` over index sets: ``out[i] = sum_{k in sets[i]} x[k]``.

    ``sets`` is either a constant (possibly sparse) matrix M with M[i, k] the
    weight of row k in output i, or a list of index lists.
    """
    M = sets if (sp.issparse(sets) or isinstance(sets, np.ndarray)) else set_matrix(sets, x.data.shape[0])
    if M.shape[1] != x.data.shape[0]:
        raise _mismatch("sum_over", M.shape, x.data.shape)
    out = np.asarray(M @ x.data)
    return _make("sum_over", out, (x,), lambda g: (np.asarray(M.T @ g),))


def set_matrix(sets: Sequence[Sequence[int]], n_cols: int, weights=None) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, members in enumerate(sets):
        for k in members:
            rows.append(i)
            cols.append(k)
            vals.append(1.0 if weights is None else weights[i])
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(sets), n_cols), dtype=DTYPE)


def take_rows(table: Tensor, index) -> Tensor:
    """Embedding lookup / row gather; gradients scatter-add into the rows used."""
    idx = np.asarray(index, dtype=np.int64)
    T = table.data
    if idx.size and (idx.min() < 0 or idx.max() >= T.shape[0]):
        raise ShapeError(f"take_rows: index out of range for table of shape {T.shape}")

    def bw(g):
        full = np.zeros_like(T)
        np.add.at(full, idx, g)
        return (full,)

    return _make("take_rows", T[idx], (table,), bw)


def pick(x: Tensor, rows, cols) -> Tensor:
    """Gather individual elements ``x[rows[k], cols[k]]`` into a vector."""
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    X = x.data

    def bw(g):
        full = np.zeros_like(X)
        np.add.at(full, (r, c), g)
        return (full,)

    return _make("pick", X[r, c], (x,), bw)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    X = x.data
    if not 0 <= start < stop <= X.shape[-1]:
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for shape {X.shape}")

    def bw(g):
        full = np.zeros_like(X)
        full[..., start:stop] = g
        return (full,)

    return _make("slice_cols", X[..., start:stop], (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    X = x.data
    try:
        out = X.reshape(shape)
    except ValueError:
        raise _mismatch("reshape", X.shape, shape) from None
    return _make("reshape", out, (x,), lambda g: (g.reshape(X.shape),))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected rank 2, got shape {x.data.shape}")
    return _make("transpose", x.data.T, (x,), lambda g: (g.T,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout with a mask drawn from ``rng``; identity when not training."""
    if not training or rate <= 0.0 or rng is None:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) < keep) / keep
    return _make("dropout", x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- composites


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, W)
    return y if b is None else add(y, b)


def mean_all(x: Tensor) -> Tensor:
    return scalar_affine(sum_all(x), 1.0 / max(1, x.data.size))


# ---------------------------------------------------------------- backward


def topological_order(root: Tensor) -> list[Tensor]:
    """Recorded tensors reachable from ``root``, inputs before consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for inp in t._node.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaves listed in ``params`` that the loss does not reach get a zero grad.
    Gradients of tensors feeding several consumers are summed.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if params is not None:
        for p in params:
            p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    order = topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            t.grad = g
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if not inp.requires_grad:
                continue
            prev = grads.get(id(inp))
            grads[id(inp)] = gi if prev is None else prev + gi
