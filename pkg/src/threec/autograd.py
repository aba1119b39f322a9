"""Minimal tape-based reverse-mode autodiff over numpy arrays.

Only the operations the graph models need are provided. Every op records a
closure that maps the output gradient to parent gradients; ``backward`` walks
the tape in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class Index:
    """Row index into an ``n``-row table with a cached scatter matrix.

    ``gather`` reads ``x[idx]``; ``segment_sum`` adds rows that share an
    index. The two are adjoint, so each one's backward pass is the other.
    """

    def __init__(self, idx: np.ndarray, n: int):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.n = int(n)
        m = len(self.idx)
        self.scatter = sp.csr_matrix(
            (np.ones(m), (self.idx, np.arange(m))), shape=(self.n, m)
        )
        self.counts = np.bincount(self.idx, minlength=self.n)

    def __len__(self) -> int:
        return len(self.idx)

    def scatter_add(self, rows: np.ndarray) -> np.ndarray:
        out = self.scatter @ rows
        return np.asarray(out)

    def segment_max(self, values: np.ndarray) -> np.ndarray:
        out = np.full(self.n, -np.inf)
        np.maximum.at(out, self.idx, values)
        return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        requires_grad: bool = False,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _lift(other)
        a, b = self.data.shape, other.data.shape
        return Tensor(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "Tensor":
        return _lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _lift(other)
        x, y = self.data, other.data
        return Tensor(
            x * y,
            (self, other),
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _lift(other)
        x, y = self.data, other.data
        out = x / y
        return Tensor(
            out,
            (self, other),
            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * out / y, y.shape)),
        )

    def __matmul__(self, other: "Tensor") -> "Tensor":
        x, y = self.data, other.data
        return Tensor(x @ y, (self, other), lambda g: (g @ y.T, x.T @ g))

    def __getitem__(self, key) -> "Tensor":
        shape = self.data.shape

        def back(g):
            full = np.zeros(shape)
            full[key] = g
            return (full,)

        return Tensor(self.data[key], (self,), back)

    def sum(self, axis: int | None = None) -> "Tensor":
        shape = self.data.shape
        if axis is None:
            return Tensor(self.data.sum(), (self,), lambda g: (np.full(shape, g),))

        def back(g):
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return Tensor(self.data.sum(axis=axis), (self,), back)

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.data.size)

    def reshape(self, *shape) -> "Tensor":
        orig = self.data.shape
        return Tensor(self.data.reshape(*shape), (self,), lambda g: (g.reshape(orig),))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# elementwise --------------------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    d = x.data
    return Tensor(np.log(d), (x,), lambda g: (g / d,))


def sigmoid(x: Tensor) -> Tensor:
    out = stable_sigmoid(x.data)
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),))


def silu(x: Tensor) -> Tensor:
    d = x.data
    s = stable_sigmoid(d)
    return Tensor(d * s, (x,), lambda g: (g * (s + d * s * (1.0 - s)),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    d = x.data
    mask = np.where(d > 0, 1.0, slope)
    return Tensor(d * mask, (x,), lambda g: (g * mask,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    d = x.data
    inside = (d >= lo) & (d <= hi)
    return Tensor(np.clip(d, lo, hi), (x,), lambda g: (g * inside,))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# graph ops ----------------------------------------------------------------


def gather(x: Tensor, index: Index) -> Tensor:
    return Tensor(x.data[index.idx], (x,), lambda g: (index.scatter_add(g),))


def segment_sum(x: Tensor, index: Index) -> Tensor:
    return Tensor(index.scatter_add(x.data), (x,), lambda g: (g[index.idx],))


def segment_softmax(scores: Tensor, index: Index) -> Tensor:
    """Softmax of per-edge ``scores`` normalized over edges sharing a target."""
    # shift is a constant; softmax is invariant to it
    shift = index.segment_max(scores.data)[index.idx]
    ex = exp(scores - shift)
    denom = segment_sum(ex.reshape(-1, 1), index).reshape(-1)
    return ex / gather(denom.reshape(-1, 1), index).reshape(-1)


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    return (a * b).sum(axis=1)


def spmm(A: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times tensor."""
    At = A.T.tocsr()
    return Tensor(np.asarray(A @ x.data), (x,), lambda g: (np.asarray(At @ g),))
