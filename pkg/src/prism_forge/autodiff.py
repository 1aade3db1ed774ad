"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Just enough machinery for the training objectives in this package: elementwise
arithmetic with broadcasting, matmul, a few nonlinearities, reductions,
shape ops, slicing, stacking, and repeat.  Gradients are exact; the finite
difference harness in ``embedding`` provides the independent check.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "constant", "parameter", "stack", "concat", "softmax"]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    # -- construction helpers ------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    # -- autodiff core ---------------------------------------------------------

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without grad requires a scalar output")
            grad = np.ones_like(self.value)
        # topological order
        order: list[Tensor] = []
        seen: set[int] = set()
        stack_ = [self]
        while stack_:
            node = stack_[-1]
            if id(node) in seen:
                stack_.pop()
                continue
            pending = [p for p in node._parents if id(p) not in seen and p.requires_grad]
            if pending:
                stack_.extend(pending)
            else:
                seen.add(id(node))
                order.append(node)
                stack_.pop()
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.value.shape)
        for node in reversed(order):
            if node._backward is not None and node.requires_grad:
                node._backward(node.grad)

    # -- operators -------------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), _wrap(-1.0)))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, _wrap(-1.0)))

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def parameter(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad and t.grad is not None:
        t.grad += g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value + b.value

    def backward(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value * b.value

    def backward(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_val = a.value / b.value

    def backward(g):
        _accum(a, _unbroadcast(g / b.value, a.value.shape))
        _accum(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul supports 2-D operands only; reshape first")
    out_val = a.value @ b.value

    def backward(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return Tensor(out_val, parents=(a, b), backward=backward)


def power(a: Tensor, p: float) -> Tensor:
    a = _wrap(a)
    out_val = np.power(a.value, p)

    def backward(g):
        _accum(a, g * p * np.power(a.value, p - 1.0))

    return Tensor(out_val, parents=(a,), backward=backward)


def sqrt(a: Tensor) -> Tensor:
    return power(a, 0.5)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_val = np.exp(a.value)

    def backward(g):
        _accum(a, g * out_val)

    return Tensor(out_val, parents=(a,), backward=backward)


def log(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_val = np.log(a.value)

    def backward(g):
        _accum(a, g / a.value)

    return Tensor(out_val, parents=(a,), backward=backward)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_val = np.tanh(a.value)

    def backward(g):
        _accum(a, g * (1.0 - out_val * out_val))

    return Tensor(out_val, parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_val = 1.0 / (1.0 + np.exp(-a.value))

    def backward(g):
        _accum(a, g * out_val * (1.0 - out_val))

    return Tensor(out_val, parents=(a,), backward=backward)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out_val = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g_arr = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a_norm(axes, a.value.ndim)):
                g_arr = np.expand_dims(g_arr, ax)
        _accum(a, np.broadcast_to(g_arr, a.value.shape).copy())

    return Tensor(out_val, parents=(a,), backward=backward)


def a_norm(axes, ndim):
    return tuple(ax % ndim for ax in axes)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.value.shape[ax] for ax in a_norm(axes, a.value.ndim)]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), _wrap(1.0 / count))


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    out_val = a.value.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.value.shape))

    return Tensor(out_val, parents=(a,), backward=backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    a = _wrap(a)
    out_val = a.value.transpose(axes)

    def backward(g):
        if axes is None:
            _accum(a, g.transpose())
        else:
            inv = np.argsort(axes)
            _accum(a, g.transpose(inv))

    return Tensor(out_val, parents=(a,), backward=backward)


def getitem(a: Tensor, idx) -> Tensor:
    a = _wrap(a)
    out_val = a.value[idx]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.value)
            np.add.at(buf, idx, g)
            _accum(a, buf)

    return Tensor(out_val, parents=(a,), backward=backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_val = np.stack([t.value for t in tensors], axis=axis)

    def backward(g):
        pieces = np.split(g, len(tensors), axis=axis)
        for t, piece in zip(tensors, pieces):
            _accum(t, piece.reshape(t.value.shape))

    return Tensor(out_val, parents=tuple(tensors), backward=backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_val = np.concatenate([t.value for t in tensors], axis=axis)

    def backward(g):
        offsets = np.cumsum([t.value.shape[axis] for t in tensors])[:-1]
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            _accum(t, piece)

    return Tensor(out_val, parents=tuple(tensors), backward=backward)


def repeat(a: Tensor, repeats: int, axis: int) -> Tensor:
    a = _wrap(a)
    out_val = np.repeat(a.value, repeats, axis=axis)

    def backward(g):
        ax = axis % a.value.ndim
        new_shape = list(a.value.shape)
        new_shape.insert(ax + 1, repeats)
        _accum(a, g.reshape(new_shape).sum(axis=ax + 1))

    return Tensor(out_val, parents=(a,), backward=backward)


def pad2d(a: Tensor, pad: int) -> Tensor:
    """Zero-pad the last two axes by ``pad`` on each side."""
    a = _wrap(a)
    width = [(0, 0)] * (a.value.ndim - 2) + [(pad, pad), (pad, pad)]
    out_val = np.pad(a.value, width)
    sl = tuple([slice(None)] * (a.value.ndim - 2) + [slice(pad, -pad), slice(pad, -pad)])

    def backward(g):
        _accum(a, g[sl])

    return Tensor(out_val, parents=(a,), backward=backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (the shift is constant w.r.t. gradients)."""
    shift = Tensor(a.value.max(axis=axis, keepdims=True))
    e = exp(add(a, mul(shift, _wrap(-1.0))))
    return div(e, sum_(e, axis=axis, keepdims=True))


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    n = sqrt(sum_(mul(a, a), axis=axis, keepdims=True) + eps)
    return div(a, n)
