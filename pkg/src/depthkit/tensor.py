"""Dense tensor with reverse-mode automatic differentiation.

Every op returns a new :class:`Tensor`. When gradients are enabled and at
least one input requires a gradient, the output carries a tape node (its
parents plus a closure mapping the output gradient to parent gradients).
:func:`backward` walks those nodes once each in reverse topological order and
then frees them.

Broadcasting is limited to trailing singleton extents: an operand of shape
``(C, 1, 1)`` combines with ``(C, H, W)``, ``(1, H, W)`` does not. Python
scalars combine with anything.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from depthkit.exceptions import ShapeError, TapeError

Scalar = Union[int, float]
BackwardFn = Callable[[np.ndarray], Sequence[Union[np.ndarray, None]]]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)
_precision: contextvars.ContextVar[int | None] = contextvars.ContextVar("precision", default=None)


def default_dtype() -> np.dtype:
    """Floating dtype for newly created tensors (32-bit unless overridden)."""
    bits = _precision.get()
    if bits is None:
        from depthkit.config import get_config

        bits = get_config().precision
    return np.dtype(np.float64 if bits == 64 else np.float32)


@contextlib.contextmanager
def precision(bits: int) -> Iterator[None]:
    """Create tensors and parameters at the given precision inside the block."""
    if bits not in (32, 64):
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    token = _precision.set(bits)
    try:
        yield
    finally:
        _precision.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Inference mode: ops inside the block record no tape nodes."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@dataclass
class _Node:
    parents: tuple[Tensor, ...]
    backward: BackwardFn


class Tensor:
    """N-dimensional array with an optional gradient and tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_node", "__weakref__")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: expected a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    __array_priority__ = 100

    def __add__(self, other: Tensor | Scalar) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Scalar) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | Scalar) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Scalar) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | Scalar) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Scalar) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | Scalar) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Scalar) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index) -> Tensor:
        return take(self, index)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return tsum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis, keepdims)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Create a leaf tensor at the active precision (or an explicit dtype)."""
    if isinstance(data, Tensor):
        data = data.data
    array = np.array(data, dtype=dtype or default_dtype())
    return Tensor(array, requires_grad=requires_grad)


def as_tensor(value) -> Tensor:
    """Pass tensors through; wrap arrays, keeping a floating dtype when they have one."""
    if isinstance(value, Tensor):
        return value
    array = np.asarray(value)
    if array.dtype.kind != "f":
        array = array.astype(default_dtype())
    return Tensor(array)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=default_dtype()), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=default_dtype()), requires_grad=requires_grad)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result, recording a tape node when a parent needs a gradient."""
    out = Tensor(data)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(tuple(parents), backward_fn)
    return out


def _as_operand(value: Tensor | Scalar, like: Tensor | Scalar) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if isinstance(like, Tensor) else default_dtype()
    return Tensor(np.asarray(value, dtype=dtype))


def _trailing_broadcastable(small: tuple[int, ...], big: tuple[int, ...]) -> bool:
    if small == () or small == big:
        return True
    if len(small) != len(big):
        return False
    k = 0
    while k < len(small) and small[k] == big[k]:
        k += 1
    return all(extent == 1 for extent in small[k:])


def _check_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if _trailing_broadcastable(b.shape, a.shape) or _trailing_broadcastable(a.shape, b.shape):
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    return grad.sum(axis=axes, keepdims=True)


def binary_elementwise(a: Tensor | Scalar, b: Tensor | Scalar, kind: str) -> Tensor:
    """Elementwise add, sub, mul or div with trailing-singleton broadcasting."""
    if kind not in ("add", "sub", "mul", "div"):
        raise ValueError(f"unknown elementwise kind {kind!r}")
    ta = _as_operand(a, b)
    tb = _as_operand(b, ta)
    _check_shapes(ta, tb, kind)
    x, y = ta.data, tb.data

    if kind == "add":
        out = x + y

        def backward(g):
            return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    elif kind == "sub":
        out = x - y

        def backward(g):
            return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    elif kind == "mul":
        out = x * y

        def backward(g):
            return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

    else:
        out = x / y

        def backward(g):
            return _unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)

    return make_op(out, (ta, tb), backward)


def add(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return binary_elementwise(a, b, "add")


def sub(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return binary_elementwise(a, b, "sub")


def mul(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return binary_elementwise(a, b, "mul")


def div(a: Tensor | Scalar, b: Tensor | Scalar) -> Tensor:
    return binary_elementwise(a, b, "div")


def _check_finite(out: np.ndarray, op: str) -> None:
    from depthkit.config import get_config

    if get_config().debug:
        assert np.all(np.isfinite(out)), f"{op} produced non-finite values"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so neither exp overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_GELU_C = np.sqrt(2.0 / np.pi)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise sigmoid, gelu (tanh form) or relu."""
    data = x.data
    if kind == "sigmoid":
        out = _sigmoid(data)

        def backward(g):
            return (g * out * (1.0 - out),)

    elif kind == "gelu":
        inner = _GELU_C * (data + 0.044715 * data**3)
        t = np.tanh(inner)
        out = 0.5 * data * (1.0 + t)

        def backward(g):
            dinner = _GELU_C * (1.0 + 3 * 0.044715 * data**2)
            local = 0.5 * (1.0 + t) + 0.5 * data * (1.0 - t * t) * dinner
            return (g * local,)

    elif kind == "relu":
        out = np.maximum(data, 0)

        def backward(g):
            return (g * (data > 0),)

    else:
        raise ValueError(f"unknown activation {kind!r}")

    out = out.astype(data.dtype, copy=False)
    _check_finite(out, kind)
    return make_op(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def gelu(x: Tensor) -> Tensor:
    return activation(x, "gelu")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    data = x.data
    return make_op(np.log(data), (x,), lambda g: (g / data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return make_op(out, (x,), lambda g: (g * 0.5 / out,))


def softplus(x: Tensor) -> Tensor:
    data = x.data
    out = np.logaddexp(0.0, data).astype(data.dtype, copy=False)
    return make_op(out, (x,), lambda g: (g * _sigmoid(data),))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); no gradient flows where the floor is active."""
    data = x.data
    keep = data > floor
    out = np.where(keep, data, np.asarray(floor, dtype=data.dtype))
    return make_op(out, (x,), lambda g: (g * keep,))


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_op(out, (x,), backward)


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims), dtype=x.dtype)
    shape = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_op(out, (x,), backward)


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(tsum(x, axes, keepdims), 1.0 / count)


def cumsum(x: Tensor, axis: int = -1) -> Tensor:
    out = np.cumsum(x.data, axis=axis)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return make_op(out, (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {original} to {tuple(shape)}") from exc
    return make_op(out, (x,), lambda g: (g.reshape(original),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return make_op(out, (x,), lambda g: (g.transpose(inverse),))


def flip(x: Tensor, axis: int = -1) -> Tensor:
    out = np.ascontiguousarray(np.flip(x.data, axis))
    return make_op(out, (x,), lambda g: (np.flip(g, axis),))


def take(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing."""
    out = np.array(x.data[index])

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] += g
        return (full,)

    return make_op(out, (x,), backward)


def masked_select(x: Tensor, mask: np.ndarray) -> Tensor:
    """1-D tensor of the entries of ``x`` where ``mask`` is true."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"masked_select: mask shape {mask.shape} does not match {x.shape}")
    out = x.data[mask]

    def backward(g):
        full = np.zeros_like(x.data)
        full[mask] = g
        return (full,)

    return make_op(out, (x,), backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat: no tensors given")
    ndim = parts[0].ndim
    for part in parts[1:]:
        other = [e for i, e in enumerate(part.shape) if i != axis % ndim]
        first = [e for i, e in enumerate(parts[0].shape) if i != axis % ndim]
        if part.ndim != ndim or other != first:
            raise ShapeError(
                f"concat: shapes {parts[0].shape} and {part.shape} differ off axis {axis}"
            )
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(parts))
        )

    return make_op(out, tuple(parts), backward)


def matmul(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Contract the innermost extent of ``x`` with the rows of a 2-D ``w``.

    An optional ``bias`` of width ``w.shape[1]`` is added to every row.
    """
    if w.ndim != 2 or x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"matmul: width mismatch between {x.shape} and {w.shape}")
    if bias is not None and bias.shape != (w.shape[1],):
        raise ShapeError(f"matmul: bias shape {bias.shape} does not match {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if bias is None else (x, w, bias)
    return make_op(out, parents, lambda g: backward(g)[: len(parents)])


def matmul_mlp(x: Tensor, layers: Sequence[Tensor], hidden_activation: str = "gelu") -> Tensor:
    """Affine chain ``[w0, b0, w1, b1, ...]`` with activations between layers.

    The final layer is linear; callers apply sigmoid or softmax themselves.
    """
    if len(layers) % 2:
        raise ShapeError("matmul_mlp: layers must be (weight, bias) pairs")
    pairs = [(layers[i], layers[i + 1]) for i in range(0, len(layers), 2)]
    out = x
    for index, (weight, bias) in enumerate(pairs):
        if out.shape[-1] != weight.shape[0]:
            raise ShapeError(
                f"matmul_mlp: layer {index} expects width {weight.shape[0]}, got {out.shape}"
            )
        out = matmul(out, weight, bias)
        if index < len(pairs) - 1:
            out = activation(out, hidden_activation)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every leaf reachable from a scalar ``loss``.

    Leaf gradients accumulate across calls; the tape nodes visited here are
    released afterwards.
    """
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss is not on the tape (no input requires a gradient)")

    # Post-order walk: every node lands in `order` after its parents.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._node is not None:
            for parent in node._node.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    # Gradients of interior nodes are dropped once propagated.
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._node is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._node.backward(g)
        for parent, pg in zip(node._node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype).reshape(parent.shape)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    for node in order:
        node._node = None
