"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps an ndarray and remembers how it was produced. Calling
``backward()`` on a scalar walks the graph once in reverse topological
order and accumulates gradients into every leaf created with
``requires_grad=True``. Graphs are acyclic by construction; repeated
``backward()`` calls keep accumulating into leaf ``grad`` buffers until
``zero_grad()`` is called explicitly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import DimensionError

Array = np.ndarray

# Log-space minus infinity. Kept finite so exp() underflows to 0.0 instead
# of producing nan via inf-inf in log-sum-exp style recursions.
NEG_INF = -1.0e30


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[Array], tuple[Optional[Array], ...]]] = None,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # ---------------------------------------------------------------- basics

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
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -------------------------------------------------------------- backward

    def backward(self) -> None:
        """Populate leaf gradients of d(self)/d(leaf). `self` must be scalar."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # ------------------------------------------------------------- operators

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data + other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self, other),
            _backward=lambda g: (
                _unbroadcast(g, self.data.shape),
                _unbroadcast(g, other.data.shape),
            ),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        if not self.requires_grad:
            return Tensor(-self.data)
        return Tensor(
            -self.data, requires_grad=True, _parents=(self,), _backward=lambda g: (-g,)
        )

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data * other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self, other),
            _backward=lambda g: (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out_data = self.data / other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self, other),
            _backward=lambda g: (
                _unbroadcast(g / other.data, self.data.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
            ),
        )

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        e = float(exponent)
        out_data = self.data ** e
        if not self.requires_grad:
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self,),
            _backward=lambda g: (g * e * self.data ** (e - 1.0),),
        )

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, as_tensor(other))

    # ------------------------------------------------------------ reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        if not self.requires_grad:
            return Tensor(out_data)

        def bw(g: Array):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, self.data.shape).copy(),)

        return Tensor(out_data, requires_grad=True, _parents=(self,), _backward=bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # --------------------------------------------------------------- shaping

    def reshape(self, *shape) -> "Tensor":
        shape = shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape
        out_data = self.data.reshape(shape)
        if not self.requires_grad:
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self,),
            _backward=lambda g: (g.reshape(self.data.shape),),
        )

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        out_data = self.data.transpose(axes)
        if not self.requires_grad:
            return Tensor(out_data)
        return Tensor(
            out_data,
            requires_grad=True,
            _parents=(self,),
            _backward=lambda g: (g.transpose(inverse),),
        )


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ------------------------------------------------------------------ elementwise


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    if not x.requires_grad:
        return Tensor(out_data)
    return Tensor(
        out_data, requires_grad=True, _parents=(x,), _backward=lambda g: (g * out_data,)
    )


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)
    if not x.requires_grad:
        return Tensor(out_data)
    return Tensor(
        out_data, requires_grad=True, _parents=(x,), _backward=lambda g: (g / x.data,)
    )


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)
    if not x.requires_grad:
        return Tensor(out_data)
    return Tensor(
        out_data,
        requires_grad=True,
        _parents=(x,),
        _backward=lambda g: (g * 0.5 / out_data,),
    )


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)
    if not x.requires_grad:
        return Tensor(out_data)
    mask = x.data > 0.0
    return Tensor(
        out_data, requires_grad=True, _parents=(x,), _backward=lambda g: (g * mask,)
    )


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    if not x.requires_grad:
        return Tensor(out_data)
    return Tensor(
        out_data,
        requires_grad=True,
        _parents=(x,),
        _backward=lambda g: (g * (1.0 - out_data * out_data),),
    )


# --------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError("matmul operands must have at least one dimension")
    if a.data.shape[-1] != b.data.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}"
        )
    out_data = np.matmul(a.data, b.data)
    if not (a.requires_grad or b.requires_grad):
        return Tensor(out_data)

    def bw(g: Array):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return (ga, gb)

    return Tensor(out_data, requires_grad=True, _parents=(a, b), _backward=bw)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not any(t.requires_grad for t in tensors):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g: Array):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_data, requires_grad=True, _parents=tuple(tensors), _backward=bw)


# ---------------------------------------------------------------- normalizers


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    if not x.requires_grad:
        return Tensor(s)

    def bw(g: Array):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return Tensor(s, requires_grad=True, _parents=(x,), _backward=bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    if not x.requires_grad:
        return Tensor(out_data)
    soft = np.exp(out_data)

    def bw(g: Array):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor(out_data, requires_grad=True, _parents=(x,), _backward=bw)


def kl_divergence(p: Array, log_q: Tensor, clamp: float = -1.0e4) -> Tensor:
    """Total KL(p || q) summed over all rows, with `p` a constant teacher.

    `p` holds probabilities, `log_q` log-probabilities. Student log-probs
    below `clamp` are clamped so teacher mass on a numerically impossible
    event yields a large finite penalty instead of inf.
    """
    p = np.asarray(p)
    if p.shape != log_q.data.shape:
        raise DimensionError(f"kl_divergence shapes differ: {p.shape} vs {log_q.data.shape}")
    lq = np.maximum(log_q.data, clamp)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    out_data = np.asarray((plogp - p * lq).sum(), dtype=log_q.data.dtype)
    if not log_q.requires_grad:
        return Tensor(out_data)
    active = log_q.data > clamp

    def bw(g: Array):
        return (-g * p * active,)

    return Tensor(out_data, requires_grad=True, _parents=(log_q,), _backward=bw)
