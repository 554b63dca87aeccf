"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation on a :class:`Tensor` whose inputs require gradients records
its parents and a backward rule on the output. :func:`backward` sorts the
recorded graph into a :class:`Tape` and replays it in reverse.

Broadcasting is deliberately narrow: operands must have equal shapes, or one
must be a scalar, or one shape must be a trailing suffix of the other
(``(N, D) + (D,)``). Anything else is a :class:`ShapeError`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """Input lies outside the domain of the operation (log/sqrt of x <= 0, non-finite values)."""


class Tensor:
    """Immutable float64 array that can take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], tuple]] = None
        self.name = name

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
    def T(self) -> "Tensor":
        return transpose(self)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operators
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, index): return take(self, index)

    def __pow__(self, exponent):
        if exponent == 2:
            return square(self)
        raise NotImplementedError("only x ** 2 is supported; use sqrt/exp/log")

    def sum(self, axis=None): return tsum(self, axis)
    def mean(self, axis=None): return mean(self, axis)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _wrap(data: np.ndarray) -> Tensor:
    # fresh results from numpy need no defensive copy
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    arr.flags.writeable = False
    out.data = arr
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    out.name = None
    return out


def _record(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = _wrap(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _broadcast_shape(a: tuple, b: tuple, op: str) -> tuple:
    if a == b:
        return a
    if a == ():
        return b
    if b == ():
        return a
    if len(a) < len(b) and b[len(b) - len(a):] == a:
        return b
    if len(b) < len(a) and a[len(a) - len(b):] == b:
        return a
    raise ShapeError(f"{op}: shapes {a} and {b} do not broadcast (only scalar and trailing-suffix broadcasting is supported)")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise binary

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    if np.any(b.data == 0):
        raise DomainError("div: divisor contains zeros")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _record(out, (a, b), backward)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not conformable")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


# ---------------------------------------------------------------------------
# elementwise unary

def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _record(-x.data, (x,), lambda g: (-g,))


def square(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    if not np.all(np.isfinite(out)):
        raise DomainError("exp: overflow to a non-finite value")
    return _record(out, (x,), lambda g: (g * out,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if np.any(~(x.data > 0)):
        bad = np.argwhere(~(x.data > 0))[0]
        raise DomainError(f"log: non-positive input at index {tuple(int(i) for i in bad)}")
    xd = x.data
    return _record(np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if np.any(~(x.data > 0)):
        bad = np.argwhere(~(x.data > 0))[0]
        raise DomainError(f"sqrt: non-positive input at index {tuple(int(i) for i in bad)}")
    out = np.sqrt(x.data)
    return _record(out, (x,), lambda g: (0.5 * g / out,))


def maximum(x: ArrayLike, floor: float) -> Tensor:
    """Elementwise ``max(x, floor)``; the gradient at ties goes to ``x``."""
    x = as_tensor(x)
    keep = x.data >= floor
    return _record(np.where(keep, x.data, floor), (x,), lambda g: (g * keep,))


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0
    return _record(np.where(keep, x.data, 0.0), (x,), lambda g: (g * keep,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form cannot overflow
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def silu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    s = _sigmoid(xd)
    return _record(xd * s, (x,), lambda g: (g * s * (1.0 + xd * (1.0 - s)),))


# ---------------------------------------------------------------------------
# reductions and shape

def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def _expand(g: np.ndarray, shape: tuple, axes) -> np.ndarray:
    if axes is None:
        return np.broadcast_to(g, shape)
    return np.broadcast_to(np.expand_dims(g, axes), shape)


def tsum(x: ArrayLike, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    shape = x.shape
    return _record(x.data.sum(axis=axes), (x,), lambda g: (_expand(g, shape, axes),))


def mean(x: ArrayLike, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    shape = x.shape
    return _record(x.data.mean(axis=axes), (x,), lambda g: (_expand(g, shape, axes) / count,))


def logsumexp(x: ArrayLike, axis=None) -> Tensor:
    """Max-shifted ``log(sum(exp(x)))``; non-finite inputs are rejected."""
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise DomainError("logsumexp: input contains non-finite values")
    axes = _norm_axis(axis, x.ndim)
    m = x.data.max(axis=axes, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axes, keepdims=True)
    out_keep = np.log(s) + m
    out = out_keep.reshape(()) if axes is None else np.squeeze(out_keep, axis=axes)
    soft = e / s
    shape = x.shape
    return _record(out, (x,), lambda g: (_expand(g, shape, axes) * soft,))


def transpose(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")
    return _record(x.data.T, (x,), lambda g: (g.T,))


def reshape(x: ArrayLike, shape) -> Tensor:
    x = as_tensor(x)
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from err
    src = x.shape
    return _record(out, (x,), lambda g: (g.reshape(src),))


def take(x: ArrayLike, index) -> Tensor:
    """Numpy-style indexing (row slices, integer or boolean masks)."""
    x = as_tensor(x)
    if isinstance(index, np.ndarray) and index.dtype == bool:
        index = np.nonzero(index)
    try:
        out = x.data[index]
    except IndexError as err:
        raise ShapeError(f"index {index!r} invalid for shape {x.shape}") from err
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _record(np.array(out), (x,), backward)


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise ShapeError(f"concatenate: shapes {ref} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record(np.concatenate([t.data for t in ts], axis=axis), ts,
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


# ---------------------------------------------------------------------------
# pairwise distances (materialised N x N)

def _check_matrix(x: Tensor, op: str):
    if x.ndim != 2:
        raise ShapeError(f"{op}: expected an N x D matrix, got shape {x.shape}")


def pairwise_sqdist(x: ArrayLike) -> Tensor:
    """``M[i, j] = ||x_i - x_j||^2`` with an exactly zero diagonal."""
    x = as_tensor(x)
    _check_matrix(x, "pairwise_sqdist")
    xd = x.data
    sq = np.einsum("ij,ij->i", xd, xd)
    out = sq[:, None] + sq[None, :] - 2.0 * (xd @ xd.T)
    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)

    def backward(g):
        s = g + g.T
        return (2.0 * (s.sum(axis=1)[:, None] * xd - s @ xd),)

    return _record(out, (x,), backward)


def pairwise_dist(x: ArrayLike) -> Tensor:
    """``M[i, j] = ||x_i - x_j||``; coincident pairs get a zero subgradient."""
    x = as_tensor(x)
    _check_matrix(x, "pairwise_dist")
    xd = x.data
    sq = np.einsum("ij,ij->i", xd, xd)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (xd @ xd.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    out = np.sqrt(d2)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(out > 0, g / out, 0.0)
        s = w + w.T
        return (s.sum(axis=1)[:, None] * xd - s @ xd,)

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# backward

class Tape:
    """Recorded nodes of one graph, in topological order (inputs first)."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(root: Tensor, tape: Optional[Tape] = None) -> dict[Tensor, np.ndarray]:
    """Gradients of scalar ``root`` with respect to every recorded leaf.

    The returned mapping is keyed by leaf tensor identity and only contains
    leaves with ``requires_grad``; use :func:`grad` for a fixed leaf list.
    """
    if root.size != 1:
        raise ShapeError(f"backward: root must be a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return {}
    tape = tape or Tape.from_root(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[node] = np.array(g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    return leaves


def grad(root: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """``d root / d w`` for each ``w``; tensors absent from the graph get zeros."""
    leaves = backward(root)
    return [np.array(leaves[w]) if w in leaves else np.zeros(w.shape) for w in wrt]
