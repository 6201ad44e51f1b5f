"""Tape-based reverse-mode automatic differentiation on float64 numpy arrays.

Deliberately small: only the operations the forecasting model needs. Every op
records a backward closure on the output tensor; ``Tensor.backward()`` walks
the tape in reverse topological order and accumulates gradients by summation.
Broadcasting is undone explicitly, and everything stays in float64 so central
finite differences are a meaningful cross-check.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / metric passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 ndarray plus an optional gradient tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- graph ------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor; defaults to d(self)/d(self)=1 for scalars."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        _accumulate(self, np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """Leaf tensor that always tracks gradients (model parameter)."""
    t = Tensor(data)
    t.requires_grad = True  # persists even when created inside no_grad()
    return t


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting introduced or stretched."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def make_op(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    """Build the output node of a primitive op; `backward(g)` must _accumulate
    into each parent. Public so modules with hand-derived adjoints (the Fourier
    mixers) can register themselves on the tape."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return make_op(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return make_op(a.data / b.data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)

    def backward(g):
        _accumulate(a, g * p * np.power(a.data, p - 1.0))

    return make_op(np.power(a.data, p), (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")

    def backward(g):
        _accumulate(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        _accumulate(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return make_op(a.data @ b.data, (a, b), backward)


# -- shape -------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape

    def backward(g):
        _accumulate(a, g.reshape(old))

    return make_op(a.data.reshape(shape), (a,), backward)


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g.swapaxes(i, j))

    return make_op(a.data.swapaxes(i, j), (a,), backward)


def narrow(a, key) -> Tensor:
    """Basic slicing. Integer/fancy indexing is not supported on the tape."""
    a = as_tensor(a)
    if not _is_basic_key(key):
        raise TypeError("only basic slices are differentiable; use index_rows/take_along")

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accumulate(a, full)

    return make_op(a.data[key], (a,), backward)


def _is_basic_key(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, slice) or p is Ellipsis or p is None for p in parts)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# -- reductions --------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return make_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in _norm_axes(axis, a.ndim)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(ax % ndim for ax in axes)


# -- elementwise nonlinearities ------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return make_op(out_data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return make_op(np.log(a.data), (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / out_data)

    return make_op(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        _accumulate(a, g * mask)

    return make_op(a.data * mask, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Row-stochastic softmax; the max shift is a constant, so gradients are exact."""
    a = as_tensor(a)
    shift = exp(add(a, -a.data.max(axis=axis, keepdims=True)))
    return div(shift, tsum(shift, axis=axis, keepdims=True))


# -- gather / scatter ----------------------------------------------------------


def index_rows(a, rows: np.ndarray) -> Tensor:
    """Select rows along axis 0; adjoint scatter-adds them back."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        _accumulate(a, full)

    return make_op(a.data[rows], (a,), backward)


def scatter_rows(a, rows: np.ndarray, length: int) -> Tensor:
    """Place rows of `a` at positions `rows` of a zero tensor with axis-0 size
    `length`. Rows must be unique; adjoint is plain row gathering."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    out_data = np.zeros((length,) + a.data.shape[1:], dtype=np.float64)
    out_data[rows] = a.data

    def backward(g):
        _accumulate(a, g[rows])

    return make_op(out_data, (a,), backward)


def take_along(a, indices: np.ndarray, axis: int) -> Tensor:
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        # add.at handles duplicate indices correctly (top-k indices never repeat)
        np.add.at(full, _along_axis_index(indices, axis), g)
        _accumulate(a, full)

    return make_op(np.take_along_axis(a.data, indices, axis=axis), (a,), backward)


def scatter_along(a, indices: np.ndarray, axis: int, size: int) -> Tensor:
    """Inverse of take_along for per-row-unique indices: spread values of `a`
    into a zero tensor whose `axis` has length `size`."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    shape = list(a.data.shape)
    shape[axis] = size
    out_data = np.zeros(shape, dtype=np.float64)
    np.put_along_axis(out_data, indices, a.data, axis=axis)

    def backward(g):
        _accumulate(a, np.take_along_axis(g, indices, axis=axis))

    return make_op(out_data, (a,), backward)


def _along_axis_index(indices: np.ndarray, axis: int):
    grids = list(np.ogrid[tuple(slice(s) for s in indices.shape)])
    grids[axis] = indices
    return tuple(grids)
