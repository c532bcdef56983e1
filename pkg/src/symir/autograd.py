"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough tape-based autodiff to express the patch encoder, char decoder,
and text encoder: elementwise arithmetic with broadcasting, matmul, a few
nonlinearities, reductions, reshapes, gather, and concatenation.  Everything
runs in float64 so analytic gradients can be checked against central finite
differences tightly.
"""

from __future__ import annotations

import math

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        # Accumulation rebinds rather than mutating, so sharing the incoming
        # array with the producer is safe.
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _make(self.data + other.data, (self, other))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad, other.shape))
        out._backward = backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out = _make(self.data * other.data, (self, other))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad * self.data, other.shape))
        out._backward = backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out = _make(self.data / other.data, (self, other))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    -grad * self.data / (other.data ** 2), other.shape))
        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = _make(self.data ** exponent, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * exponent * self.data ** (exponent - 1))
        out._backward = backward
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = _make(self.data @ other.data, (self, other))

        def backward(grad):
            if self.requires_grad:
                g = grad @ np.swapaxes(other.data, -1, -2)
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                g = np.swapaxes(self.data, -1, -2) @ grad
                other._accumulate(_unbroadcast(g, other.shape))
        out._backward = backward
        return out

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        value = np.exp(self.data)
        out = _make(value, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * value)
        out._backward = backward
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad / self.data)
        out._backward = backward
        return out

    def tanh(self):
        value = np.tanh(self.data)
        out = _make(value, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * (1.0 - value ** 2))
        out._backward = backward
        return out

    def sqrt(self):
        return self ** 0.5

    # -- reductions and shape ops -------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def backward(grad):
            if not self.requires_grad:
                return
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())
        out._backward = backward
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.reshape(self.shape))
        out._backward = backward
        return out

    def swapaxes(self, a: int, b: int):
        out = _make(np.swapaxes(self.data, a, b), (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(np.swapaxes(grad, a, b))
        out._backward = backward
        return out

    def transpose(self, axes):
        out = _make(np.transpose(self.data, axes), (self,))
        inverse = np.argsort(axes)

        def backward(grad):
            if self.requires_grad:
                self._accumulate(np.transpose(grad, inverse))
        out._backward = backward
        return out

    def __getitem__(self, key):
        out = _make(self.data[key], (self,))

        def backward(grad):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, key, grad)
                self._accumulate(full)
        out._backward = backward
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
    return out


def take(tensor: Tensor, indices) -> Tensor:
    """Gather rows along axis 0 (embedding lookup); scatter-add on backward."""
    indices = np.asarray(indices)
    out = _make(tensor.data[indices], (tensor,))

    def backward(grad):
        if tensor.requires_grad:
            full = np.zeros_like(tensor.data)
            np.add.at(full, indices, grad)
            tensor._accumulate(full)
    out._backward = backward
    return out


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for tensor, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if tensor.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(start, stop)
                tensor._accumulate(grad[tuple(index)])
    out._backward = backward
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = _make(value, (x,))

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad - np.exp(value)
                          * grad.sum(axis=axis, keepdims=True))
    out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    value = shifted / shifted.sum(axis=axis, keepdims=True)
    out = _make(value, (x,))

    def backward(grad):
        if x.requires_grad:
            x._accumulate(value * (grad - (grad * value).sum(axis=axis,
                                                            keepdims=True)))
    out._backward = backward
    return out


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    data = x.data
    square = data * data
    inner = np.tanh(_GELU_C * (data + _GELU_A * square * data))
    value = 0.5 * data * (1.0 + inner)
    out = _make(value, (x,))

    def backward(grad):
        if x.requires_grad:
            slope = (0.5 * (1.0 + inner)
                     + 0.5 * data * (1.0 - inner * inner)
                     * _GELU_C * (1.0 + 3.0 * _GELU_A * square))
            x._accumulate(grad * slope)
    out._backward = backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    sigma = np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered / sigma
    out = _make(normed * gain.data + bias.data, (x, gain, bias))

    def backward(grad):
        if bias.requires_grad:
            reduce_axes = tuple(range(grad.ndim - 1))
            bias._accumulate(grad.sum(axis=reduce_axes))
        if gain.requires_grad:
            reduce_axes = tuple(range(grad.ndim - 1))
            gain._accumulate((grad * normed).sum(axis=reduce_axes))
        if x.requires_grad:
            gy = grad * gain.data
            x._accumulate((gy - gy.mean(axis=-1, keepdims=True)
                           - normed * (gy * normed).mean(axis=-1, keepdims=True))
                          / sigma)
    out._backward = backward
    return out


def numeric_gradient(func, array: np.ndarray, indices, step: float = 1e-5):
    """Central finite differences of a scalar-valued func at selected indices.

    ``func`` is re-evaluated with the array perturbed in place; the array is
    restored afterwards.  Used as the independent oracle for gradient tests.
    """
    grads = []
    for index in indices:
        original = array[index]
        array[index] = original + step
        upper = func()
        array[index] = original - step
        lower = func()
        array[index] = original
        grads.append((upper - lower) / (2.0 * step))
    return np.array(grads)
