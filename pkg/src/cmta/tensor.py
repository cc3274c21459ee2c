"""Dense-tensor numerics with reverse-mode differentiation.

A Tensor wraps a numpy array and records, per derived value, a closure that
pushes the output adjoint back onto its inputs. Gradients for parameters used
multiple times accumulate by summation, so backward order does not matter.

Training runs in float32; tests and gradient checks switch to float64 via
set_default_dtype / default_dtype.
"""

from __future__ import annotations

import contextlib

import numpy as np

_DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised at graph-build time when operand shapes are incompatible."""


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        g = _unbroadcast(np.asarray(g, dtype=self.data.dtype), self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- arithmetic -----------------------------------------------------

    def _wrap(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)

    def __add__(self, other):
        other = self._wrap(other)
        out = _result(self.data + other.data, (self, other))

        def bw(g):
            if self.requires_grad or self._parents:
                self._accumulate(g)
            if other.requires_grad or other._parents:
                other._accumulate(g)
        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _result(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        out = _result(self.data * other.data, (self, other))

        def bw(g):
            if self.requires_grad or self._parents:
                self._accumulate(g * other.data)
            if other.requires_grad or other._parents:
                other._accumulate(g * self.data)
        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, exponent: float):
        exponent = float(exponent)
        out = _result(self.data ** exponent, (self,))
        out._backward = lambda g: self._accumulate(
            g * exponent * self.data ** (exponent - 1.0))
        return out

    def __matmul__(self, other):
        other = self._wrap(other)
        if self.data.shape[-1] != other.data.shape[-2 if other.ndim > 1 else 0]:
            raise ShapeError(
                f"matmul inner extents differ: {self.shape} @ {other.shape}")
        out = _result(np.matmul(self.data, other.data), (self, other))

        def bw(g):
            if self.requires_grad or self._parents:
                self._accumulate(np.matmul(g, np.swapaxes(other.data, -1, -2)))
            if other.requires_grad or other._parents:
                other._accumulate(np.matmul(np.swapaxes(self.data, -1, -2), g))
        out._backward = bw
        return out

    # ---- shape ops ------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _result(self.data.reshape(shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self):
        if self.ndim != 2:
            raise ShapeError(f"transpose expects a matrix, got shape {self.shape}")
        out = _result(self.data.T, (self,))
        out._backward = lambda g: self._accumulate(g.T)
        return out

    @property
    def mT(self):
        """Swap the last two axes (batched matrix transpose)."""
        out = _result(np.swapaxes(self.data, -1, -2), (self,))
        out._backward = lambda g: self._accumulate(np.swapaxes(g, -1, -2))
        return out

    def __getitem__(self, key):
        out = _result(self.data[key], (self,))

        def bw(g):
            full = np.zeros_like(self.data)
            full[key] = g
            self._accumulate(full)
        out._backward = bw
        return out

    # ---- reductions and nonlinearities ----------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _result(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))
        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def sigmoid(self):
        x = self.data
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        s[~pos] = e / (1.0 + e)
        out = _result(s, (self,))
        out._backward = lambda g: self._accumulate(g * s * (1.0 - s))
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = _result(t, (self,))
        out._backward = lambda g: self._accumulate(g * (1.0 - t * t))
        return out

    def relu(self):
        out = _result(np.maximum(self.data, 0.0), (self,))
        out._backward = lambda g: self._accumulate(g * (self.data > 0))
        return out

    def log(self):
        out = _result(np.log(self.data), (self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def exp(self):
        e = np.exp(self.data)
        out = _result(e, (self,))
        out._backward = lambda g: self._accumulate(g * e)
        return out

    def clamp(self, lo: float | None = None, hi: float | None = None):
        out = _result(np.clip(self.data, lo, hi), (self,))
        mask = np.ones_like(self.data, dtype=bool)
        if lo is not None:
            mask &= self.data >= lo
        if hi is not None:
            mask &= self.data <= hi
        out._backward = lambda g: self._accumulate(g * mask)
        return out

    def softmax(self, axis: int = -1):
        if not -self.ndim <= axis < self.ndim:
            raise ShapeError(f"softmax axis {axis} out of range for shape {self.shape}")
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=axis, keepdims=True)
        out = _result(s, (self,))

        def bw(g):
            inner = (g * s).sum(axis=axis, keepdims=True)
            self._accumulate(s * (g - inner))
        out._backward = bw
        return out


def _result(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad or p._parents for p in parents)
    out._backward = None
    out._parents = parents if out.requires_grad else ()
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _result(data, tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])
    out._backward = bw
    return out


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply learnable scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (var + eps) ** -0.5 * scale + shift


def grad_check(f, params, step: float = 1e-5) -> float:
    """Compare tape adjoints of the scalar f() against central differences.

    Returns the maximum relative error over every coordinate of every
    parameter. Meaningful only at float64 precision.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss in grad_check")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            ref = a.reshape(-1)[i]
            err = abs(ref - numeric) / max(abs(ref), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst
