"""Reverse-mode automatic differentiation over dense float64 matrices.

Everything the learned stages need lives here: a ``Tensor`` graph node, a
closed set of differentiable primitives, and an adaptive-moment optimizer
with decoupled weight decay. Shapes are strictly 2-D; vectors are 1 x n.
Every public operation validates that its result is finite and raises
``NumericError`` otherwise, so NaN/Inf never propagate silently.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError

Array = np.ndarray


def _as_matrix(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-D, got array of shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D float64 matrix plus the plumbing to replay its backward pass.

    ``value`` is the forward result, ``grad`` is materialized lazily during
    :meth:`backward`. Leaf tensors created with ``requires_grad=True`` are
    trainable parameters; everything else is either a constant or an
    intermediate node holding references to its parents.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.value = _as_matrix(value)
        if not np.isfinite(self.value).all():
            raise NumericError(
                f"non-finite entries in tensor of shape {self.value.shape}")
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def backward(self) -> None:
        """Populate gradients of every reachable node by reverse traversal.

        Requires a 1x1 (scalar) value. Each call recomputes gradients from
        scratch: grads of all nodes in this graph are cleared first, so
        repeated calls on the same graph are deterministic and each node is
        visited exactly once.
        """
        if self.shape != (1, 1):
            raise ValueError(f"backward requires a 1x1 loss, got shape {self.shape}")
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accumulate(t: Tensor, g: Array) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _node(value, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True,
                      _parents=tuple(parents), _backward=backward)
    return Tensor(value)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.value + b.value, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.value - b.value, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _check_same_shape(a, b, "mul")

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _node(a.value * b.value, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _node(a.value @ b.value, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g.T)

    return _node(a.value.T.copy(), (a,), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar (not differentiated w.r.t. the scalar)."""
    factor = float(factor)

    def backward(g):
        _accumulate(a, g * factor)

    return _node(a.value * factor, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0

    def backward(g):
        _accumulate(a, g * mask)

    return _node(np.where(mask, a.value, 0.0), (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    mask = a.value > 0.0

    def backward(g):
        _accumulate(a, g * np.where(mask, 1.0, slope))

    return _node(np.where(mask, a.value, slope * a.value), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # exp(-logaddexp(0, -x)) is the overflow-safe logistic for both tails.
    y = np.exp(-np.logaddexp(0.0, -a.value))

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _node(y, (a,), backward)


def exp(a: Tensor) -> Tensor:
    # Overflow surfaces as a NumericError from the constructor, not a warning.
    with np.errstate(over="ignore"):
        y = np.exp(a.value)

    def backward(g):
        _accumulate(a, g * y)

    return _node(y, (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability."""
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accumulate(a, y * (g - inner))

    return _node(y, (a,), backward)


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows; result is 1 x cols."""
    rows = a.rows

    def backward(g):
        _accumulate(a, np.repeat(g, rows, axis=0) / rows)

    return _node(a.value.mean(axis=0, keepdims=True), (a,), backward)


def total_sum(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.full_like(a.value, g[0, 0]))

    return _node([[a.value.sum()]], (a,), backward)


def frobenius_sq(a: Tensor) -> Tensor:
    """Squared Frobenius norm, i.e. the sum of squared entries."""
    def backward(g):
        _accumulate(a, 2.0 * g[0, 0] * a.value)

    return _node([[float((a.value * a.value).sum())]], (a,), backward)


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    """Clip entries to [low, high]; gradient flows where the input is in range."""
    mask = (a.value >= low) & (a.value <= high)

    def backward(g):
        _accumulate(a, g * mask)

    return _node(np.clip(a.value, low, high), (a,), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_cols needs at least one tensor")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ValueError(
                f"concat_cols row mismatch: {p.shape} vs {parts[0].shape}")
    widths = [p.cols for p in parts]

    def backward(g):
        j = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, j:j + w])
            j += w

    return _node(np.concatenate([p.value for p in parts], axis=1),
                 parts, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.cols):
        raise ValueError(f"column slice [{start}:{stop}] out of range for {a.shape}")

    def backward(g):
        full = np.zeros_like(a.value)
        full[:, start:stop] = g
        _accumulate(a, full)

    return _node(a.value[:, start:stop].copy(), (a,), backward)


def gradients(loss: Tensor, params: Iterable[Tensor]) -> dict[Tensor, Array]:
    """Run backward and return per-parameter gradients.

    Parameters unreachable from the loss receive an explicit zero matrix.
    """
    loss.backward()
    out = {}
    for p in params:
        out[p] = p.grad.copy() if p.grad is not None else np.zeros_like(p.value)
    return out


def uniform_init(rng: np.random.Generator, rows: int, cols: int,
                 fan_in: int | None = None) -> Tensor:
    """Scaled-uniform (fan-in) parameter initialization."""
    span = 1.0 / math.sqrt(fan_in if fan_in is not None else rows)
    return Tensor(rng.uniform(-span, span, size=(rows, cols)), requires_grad=True)


def zeros_init(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True)


class Adam:
    """Bias-corrected adaptive-moment optimizer with decoupled weight decay.

    Weight decay is applied directly to the parameter (not mixed into the
    moment estimates), so a nonzero ``weight_decay`` realizes an L2 penalty
    on the weights independently of the gradient scaling.
    """

    def __init__(self, params: Iterable[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if weight_decay < 0.0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.count = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.count += 1
        t = self.count
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.value)
            elif g.shape != p.value.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter {p.value.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * p.value
            p.value -= update
