"""Minimal reverse-mode autodiff over float64 numpy buffers.

Operations run eagerly; when a GradTape is active and an input requires
gradients, the op appends a node (inputs, output, backward closure) to the
tape. backward() replays the tape in reverse exactly once. Every op output
is checked for NaN/Inf — non-finite values are a hard error, not a warning.

Broadcasting is deliberately limited to bias-add over rows; everything else
demands exact shapes so mistakes fail loudly.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteValue, NonScalarLoss, ShapeMismatch, TapeConsumed

_TLS = threading.local()


def _tape_stack() -> list:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    return stack


class Tensor:
    """N-dimensional float64 value, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("tensor initialised with NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __getitem__(self, key) -> "Tensor":
        return slice_(self, key)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class _Node:
    __slots__ = ("name", "inputs", "out", "backward_fn")

    def __init__(self, name, inputs, out, backward_fn):
        self.name = name
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class GradTape:
    """Ordered record of ops; consumed by a single backward() call."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)


def _wrap(arr: np.ndarray, requires_grad: bool) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = requires_grad
    t.grad = None
    return t


def make_op(
    name: str,
    out_data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], tuple],
) -> Tensor:
    """Register an eager op result on the active tape (if any)."""
    out_data = np.asarray(out_data, dtype=np.float64)
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteValue(f"{name} produced non-finite values")
    requires_grad = any(t.requires_grad for t in inputs)
    out = _wrap(out_data, requires_grad)
    stack = _tape_stack()
    if stack and requires_grad:
        tape = stack[-1]
        if not tape._consumed:
            tape._nodes.append(_Node(name, tuple(inputs), out, backward_fn))
    return out


def backward(loss: Tensor, tape: GradTape) -> None:
    """Accumulate gradients of a scalar loss into .grad of tracked tensors."""
    if tape._consumed:
        raise TapeConsumed("tape already replayed; run a fresh forward pass")
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.data.shape}")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        out_grad = node.out.grad
        if out_grad is None:
            continue
        grads = node.backward_fn(out_grad)
        for t, g in zip(node.inputs, grads):
            if g is None or not t.requires_grad:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteValue(f"{node.name} backward produced non-finite gradient")
            t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return make_op("matmul", a.data @ b.data, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")
    return make_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Row-broadcast bias: x[N x D] + bias[D]. The one permitted broadcast."""
    if bias.data.ndim != 1 or x.data.ndim < 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeMismatch(f"add_bias {x.shape} + {bias.shape}")

    def bw(g):
        return g, g.reshape(-1, bias.shape[0]).sum(axis=0)

    return make_op("add_bias", x.data + bias.data, (x, bias), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}")
    return make_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_op("scale", x.data * c, (x,), lambda g: (g * c,))


def reshape(x: Tensor, shape) -> Tensor:
    in_shape = x.data.shape
    return make_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(in_shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv) if inv is not None else g.transpose(),)

    return make_op("transpose", x.data.transpose(axes), (x,), bw)


def slice_(x: Tensor, key) -> Tensor:
    in_shape = x.data.shape
    out = x.data[key]

    def bw(g):
        full = np.zeros(in_shape)
        full[key] = g
        return (full,)

    return make_op("slice", out.copy(), (x,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", y, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm affine {gain.shape}/{bias.shape} for width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def bw(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_op("layer_norm", xhat * gain.data + bias.data, (x, gain, bias), bw)


def channel_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of a [C x H x W] map over its H*W extent.

    Batch-free: statistics come from the sample itself, so tiny batch sizes
    cannot destabilise them.
    """
    if x.data.ndim != 3:
        raise ShapeMismatch(f"channel_norm expects [C,H,W], got {x.shape}")
    c = x.shape[0]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeMismatch(f"channel_norm affine {gain.shape}/{bias.shape} for {c} channels")
    mu = x.data.mean(axis=(1, 2), keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    g3 = gain.data[:, None, None]

    def bw(g):
        dxhat = g * g3
        dx = inv * (
            dxhat
            - dxhat.mean(axis=(1, 2), keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=(1, 2), keepdims=True)
        )
        return dx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return make_op("channel_norm", xhat * g3 + bias.data[:, None, None], (x, gain, bias), bw)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    c = np.sqrt(2.0 / np.pi)
    x3 = x.data**3
    t = np.tanh(c * (x.data + 0.044715 * x3))

    def bw(g):
        du = c * (1.0 + 3 * 0.044715 * x.data**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * du),)

    return make_op("gelu", 0.5 * x.data * (1.0 + t), (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    # stable form: exp(-|x|) never overflows
    t = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0, t) / (1.0 + t)

    def bw(g):
        return (g * y * (1.0 - y),)

    return make_op("sigmoid", y, (x,), bw)


def silu(x: Tensor) -> Tensor:
    """Swish activation x * sigmoid(x), fused (it sits on the CNN hot path)."""
    t = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0, t) / (1.0 + t)

    def bw(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return make_op("silu", x.data * s, (x,), bw)


def sum_(x: Tensor) -> Tensor:
    shape = x.data.shape
    return make_op("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = x.data.size
        shape = x.data.shape
        return make_op(
            "mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),)
        )
    n = x.data.shape[axis]

    def bw(g):
        return (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,)

    return make_op("mean", x.data.mean(axis=axis), (x,), bw)
