"""Define-by-run reverse-mode automatic differentiation over float64 arrays.

A ``Tape`` is opened with ``with Tape() as tape:``; every operation evaluated
while it is the innermost active tape and that touches a tensor with
``requires_grad`` is appended to it together with a closure holding the
forward values its gradient needs. ``backward(tape, root)`` then walks the
recorded nodes once, in reverse order.

Tapes are thread-confined: the active-tape stack is thread-local.
"""

import threading
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from ..core.error_handling import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    NumericError,
)

Operand = Union["Tensor", float, int]
VectorJacobian = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_local = threading.local()


def _tape_stack() -> list["Tape | None"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_tape() -> "Tape | None":
    """Innermost tape active on this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording on this thread, even inside an open tape."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


@dataclass
class _Node:
    node_id: int
    parents: tuple[int | None, ...]
    vjp: VectorJacobian | None  # None for leaves


class Tensor:
    """Dense n-dimensional array of 64-bit reals with an optional gradient slot."""

    __slots__ = ("_tape", "data", "grad", "node_id", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.require(np.asarray(array, dtype=np.float64), requirements="C")
        out.requires_grad = False
        out.node_id = None
        out.grad = None
        out._tape = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Gradient-free copy of this tensor."""
        return Tensor(self.data)

    def __deepcopy__(self, memo: dict) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad_flag})"

    # Operators

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # Method forms

    def sum(self, axes: int | Iterable[int] | None = None, keepdims: bool = False):
        return reduce("sum", self, axes, keepdims)

    def mean(self, axes: int | Iterable[int] | None = None, keepdims: bool = False):
        return reduce("mean", self, axes, keepdims)

    def relu(self) -> "Tensor":
        return relu(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def square(self) -> "Tensor":
        return square(self)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def expand(self, shape: Sequence[int]) -> "Tensor":
        return expand(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class GradientMap:
    """Gradients produced by one backward pass, keyed by node id."""

    def __init__(self, tape: "Tape", grads: dict[int, np.ndarray]):
        self._tape = tape
        self._grads = grads

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._grads

    def __getitem__(self, node_id: int) -> np.ndarray:
        return self._grads[node_id]

    def __len__(self) -> int:
        return len(self._grads)

    def wrt(self, tensor: Tensor) -> np.ndarray:
        """Gradient of the root with respect to ``tensor`` (zeros if unrelated)."""
        if tensor._tape is self._tape and tensor.node_id in self._grads:
            return self._grads[tensor.node_id]
        return np.zeros_like(tensor.data)


class Tape:
    """Ordered record of operations; parents always precede their children."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def watch(self, tensor: Tensor) -> int:
        """Register ``tensor`` as a leaf of this tape unless it already lives here."""
        if tensor._tape is not self or tensor.node_id is None:
            node_id = len(self._nodes)
            self._nodes.append(_Node(node_id, (), None))
            self._leaves[node_id] = tensor
            tensor.node_id = node_id
            tensor._tape = self
        return tensor.node_id

    def record(self, parents: Sequence[Tensor], vjp: VectorJacobian) -> int:
        parent_ids = tuple(
            self.watch(parent) if parent.requires_grad else None for parent in parents
        )
        node_id = len(self._nodes)
        self._nodes.append(_Node(node_id, parent_ids, vjp))
        return node_id


def backward(tape: Tape, root: Tensor) -> GradientMap:
    """Reverse pass from a scalar ``root``; fills ``.grad`` on the tape's leaves."""
    if root.size != 1:
        raise ContractError(
            f"backward needs a scalar root, got shape {root.shape}",
            {"shape": root.shape},
        )
    if root._tape is not tape or root.node_id is None:
        raise ContractError("root was not recorded on this tape")

    grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
    for node in reversed(tape._nodes[: root.node_id + 1]):
        grad = grads.get(node.node_id)
        if grad is None or node.vjp is None:
            continue
        for parent_id, parent_grad in zip(node.parents, node.vjp(grad), strict=True):
            if parent_id is None or parent_grad is None:
                continue
            if parent_id in grads:
                grads[parent_id] = grads[parent_id] + parent_grad
            else:
                grads[parent_id] = parent_grad

    for node_id, leaf in tape._leaves.items():
        leaf.grad = grads.get(node_id, np.zeros_like(leaf.data))
    return GradientMap(tape, grads)


def _as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64))


def _result(data: np.ndarray, parents: Sequence[Tensor], vjp: VectorJacobian) -> Tensor:
    out = Tensor._wrap(data)
    tape = current_tape()
    if tape is not None and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out.node_id = tape.record(parents, vjp)
        out._tape = tape
    return out


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} differ and neither is a scalar",
            {"left": a.shape, "right": b.shape},
        )


def _fit(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient onto a scalar operand that was broadcast."""
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# Elementwise operations


def add(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "add")
    return _result(
        a.data + b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(g, b.shape))
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "sub")
    return _result(
        a.data - b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(-g, b.shape))
    )


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "mul")
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_fit(g * b.data, a.shape), _fit(g * a.data, b.shape)),
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "div")
    if np.any(b.data == 0.0):
        raise NumericError("division by exact zero")
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (_fit(g / b.data, a.shape), _fit(-g * out / b.data, b.shape)),
    )


def neg(x: Operand) -> Tensor:
    x = _as_tensor(x)
    return _result(-x.data, (x,), lambda g: (-g,))


def sqrt(x: Operand) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data < 0.0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(x.data)

    def vjp(g: np.ndarray):
        with np.errstate(divide="ignore"):
            return (g / (2.0 * out),)

    return _result(out, (x,), vjp)


def square(x: Operand) -> Tensor:
    x = _as_tensor(x)
    return _result(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def relu(x: Operand) -> Tensor:
    x = _as_tensor(x)
    # relu'(0) is taken as 0
    mask = x.data > 0.0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Operand) -> Tensor:
    x = _as_tensor(x)
    out = special.expit(x.data)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


_ELEMENTWISE: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "sqrt": sqrt,
    "square": square,
    "relu": relu,
}


def elementwise(kind: str, *args: Operand) -> Tensor:
    """Dispatch an elementwise operation by name."""
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(
            f"unknown elementwise op '{kind}'", {"valid": sorted(_ELEMENTWISE)}
        )
    return op(*args)


# Reductions and shape operations


def _normalize_axes(axes: int | Iterable[int] | None, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise DimensionError(f"axis {axis} out of range for rank {ndim}")
        normalized.append(axis % ndim)
    return tuple(sorted(set(normalized)))


def reduce(
    kind: str,
    x: Tensor,
    axes: int | Iterable[int] | None = None,
    keepdims: bool = False,
) -> Tensor:
    """Sum or mean over ``axes`` (all axes when None, no-op when empty)."""
    if kind not in ("sum", "mean"):
        raise ContractError(f"unknown reduction '{kind}'")
    axis_tuple = _normalize_axes(axes, x.ndim)
    if not axis_tuple and x.ndim > 0:
        return x

    count = int(np.prod([x.shape[axis] for axis in axis_tuple], dtype=np.int64))
    if count == 0:
        raise DegenerateInputError(f"cannot {kind} over an empty extent")

    out = x.data.sum(axis=axis_tuple, keepdims=keepdims)
    scale = 1.0
    if kind == "mean":
        scale = 1.0 / count
        out = out * scale

    def vjp(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axis_tuple)
        return (np.broadcast_to(g * scale, x.shape).copy(),)

    return _result(np.asarray(out), (x,), vjp)


def l2_norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the gradient is x/||x|| where ||x|| > 0."""
    out = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))

    def vjp(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(out > 0.0, out, 1.0)
        return (np.where(out > 0.0, g * x.data / safe, 0.0),)

    data = out if keepdims else np.squeeze(out, axis=axis)
    return _result(data, (x,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: cannot multiply {a.shape} by {b.shape}",
            {"left": a.shape, "right": b.shape},
        )
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from e
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return _result(x.data.T, (x,), lambda g: (g.T,))


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicitly broadcast ``x`` to ``shape`` (numpy rules); gradients are summed back."""
    target = tuple(shape)
    try:
        out = np.broadcast_to(x.data, target)
    except ValueError as e:
        raise DimensionError(f"cannot expand {x.shape} to {target}") from e

    def vjp(g: np.ndarray):
        lead = g.ndim - x.ndim
        summed = g.sum(axis=tuple(range(lead))) if lead else g
        stretched = tuple(
            axis
            for axis, (have, want) in enumerate(zip(x.shape, summed.shape, strict=True))
            if have == 1 and want != 1
        )
        if stretched:
            summed = summed.sum(axis=stretched, keepdims=True)
        return (summed,)

    return _result(out.copy(), (x,), vjp)


# Fused and structured primitives


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``)."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"logits {logits.shape} and labels {labels.shape} do not match"
        )
    n = logits.shape[0]
    log_probs = special.log_softmax(logits.data, axis=1)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def vjp(g: np.ndarray):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (g / n),)

    return _result(np.asarray(loss), (logits,), vjp)


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride {stride} / padding {padding}")
    out = (extent + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise DimensionError(
            f"kernel {kernel} does not fit extent {extent} with padding {padding}"
        )
    return out


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Direct cross-correlation of NCHW input with OIHW kernels (no bias)."""
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise DimensionError(
            f"conv2d: input {x.shape} incompatible with kernels {kernels.shape}"
        )
    n, _, h, w = x.shape
    c_out, _, kh, kw = kernels.shape
    h_out = conv_output_extent(h, kh, stride, padding)
    w_out = conv_output_extent(w, kw, stride, padding)

    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    padded = np.pad(x.data, pad)
    rows = slice(0, stride * h_out, stride)
    cols = slice(0, stride * w_out, stride)

    def window(array: np.ndarray, p: int, q: int) -> tuple[slice, ...]:
        return (
            slice(None),
            slice(None),
            slice(p + rows.start, p + rows.stop, stride),
            slice(q + cols.start, q + cols.stop, stride),
        )

    out = np.zeros((n, c_out, h_out, w_out))
    for p in range(kh):
        for q in range(kw):
            patch = padded[window(padded, p, q)]
            out += np.einsum("nchw,oc->nohw", patch, kernels.data[:, :, p, q])

    def vjp(g: np.ndarray):
        grad_padded = np.zeros_like(padded)
        grad_kernels = np.zeros_like(kernels.data)
        for p in range(kh):
            for q in range(kw):
                idx = window(padded, p, q)
                grad_kernels[:, :, p, q] = np.einsum("nohw,nchw->oc", g, padded[idx])
                grad_padded[idx] += np.einsum("nohw,oc->nchw", g, kernels.data[:, :, p, q])
        grad_x = grad_padded[:, :, padding : padding + h, padding : padding + w]
        return (grad_x, grad_kernels)

    return _result(out, (x, kernels), vjp)


def avg_pool2d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping ``size`` x ``size`` average pooling of NCHW input.

    Trailing rows and columns that do not fill a window are dropped.
    """
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2d expects NCHW input, got shape {x.shape}")
    if size < 1:
        raise DimensionError(f"invalid pool size {size}")
    n, c, h, w = x.shape
    h_out, w_out = h // size, w // size
    if h_out < 1 or w_out < 1:
        raise DimensionError(f"pool size {size} does not fit extent {(h, w)}")
    kept = x.data[:, :, : h_out * size, : w_out * size]
    out = kept.reshape(n, c, h_out, size, w_out, size).mean(axis=(3, 5))

    def vjp(g: np.ndarray):
        grad = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        grad[:, :, : h_out * size, : w_out * size] = spread
        return (grad,)

    return _result(out, (x,), vjp)
