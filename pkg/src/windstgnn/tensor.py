"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable primitive records a node on the tensor it produces.
Node ids come from a single global counter, so creation order is a valid
topological order; ``backward`` walks it in reverse, which makes gradient
accumulation (and therefore the gradients themselves) deterministic.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "UnsupportedOpError",
    "GraphError",
    "MissingNodeError",
    "tensor",
    "parameter",
    "no_grad",
    "is_grad_enabled",
    "primitive_forward",
    "backward",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested primitive."""


class UnsupportedOpError(KeyError):
    pass


class GraphError(RuntimeError):
    """Contract violation when calling backward."""


class MissingNodeError(GraphError):
    """The graph needed by backward was never recorded or was already freed."""


_ids = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class _Node:
    __slots__ = ("kind", "parents", "backward_fn")

    def __init__(self, kind: str, parents: tuple, backward_fn: Callable):
        self.kind = kind
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "_node", "_freed", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id = next(_ids)
        self._node: _Node | None = None
        self._freed = False

    # -- introspection ---------------------------------------------------
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
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return mean(self, axis, keepdims)

    def relu(self) -> "Tensor":
        return relu(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def backward(self) -> dict[int, np.ndarray]:
        return backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, kind: str, parents: tuple, backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(kind, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, "add", (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, "sub", (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, "mul", (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("div", a, b)

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data / b.data, "div", (a, b), bw)


# -- elementwise unary -------------------------------------------------------

def neg(x) -> Tensor:
    x = _as_tensor(x)
    return _make(-x.data, "neg", (x,), lambda g: (-g,))


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _make(x.data * c, "scale", (x,), lambda g: (g * c,))


def shift(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _make(x.data + c, "shift", (x,), lambda g: (g,))


def power(x, p: float) -> Tensor:
    x = _as_tensor(x)
    p = float(p)
    out = x.data ** p
    return _make(out, "power", (x,), lambda g: (g * p * x.data ** (p - 1.0),))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _make(out, "exp", (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = _as_tensor(x)
    return _make(np.log(x.data), "log", (x,), lambda g: (g / x.data,))


def abs_(x) -> Tensor:
    x = _as_tensor(x)
    return _make(np.abs(x.data), "abs", (x,), lambda g: (g * np.sign(x.data),))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)
    return _make(out, "relu", (x,), lambda g: (g * (x.data > 0.0),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, "tanh", (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def huber(x, delta: float) -> Tensor:
    """Elementwise Huber penalty of a residual tensor."""
    x = _as_tensor(x)
    delta = float(delta)
    if delta <= 0:
        raise ValueError(f"huber delta must be positive, got {delta}")
    a = np.abs(x.data)
    quad = a <= delta
    out = np.where(quad, 0.5 * x.data * x.data, delta * a - 0.5 * delta * delta)

    def bw(g):
        return (g * np.where(quad, x.data, delta * np.sign(x.data)),)

    return _make(out, "huber", (x,), bw)


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, "softmax", (x,), bw)


# -- reductions --------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _make(np.asarray(out), "sum", (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.sum(axis=axes, keepdims=keepdims) / count

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return _make(np.asarray(out), "mean", (x,), bw)


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules; both operands need ndim >= 2."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, "matmul", (a, b), bw)


def conv1d(x, w, dilation: int = 1) -> Tensor:
    """Valid (unpadded) dilated cross-correlation along the last axis.

    ``x`` is ``(..., C_in, L)`` and ``w`` is ``(C_out, C_in, k)``; the result
    is ``(..., C_out, L - (k - 1) * dilation)``. A 1-D signal with a 1-D kernel
    is accepted as the single-channel case.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim == 1 and w.ndim == 1:
        out = conv1d(reshape(x, (1, x.shape[0])), reshape(w, (1, 1, w.shape[0])), dilation)
        return reshape(out, (out.shape[-1],))
    dilation = int(dilation)
    if dilation < 1:
        raise ValueError(f"conv1d: dilation must be >= 1, got {dilation}")
    if w.ndim != 3 or x.ndim < 2 or x.shape[-2] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} and kernel {w.shape} do not conform")
    c_out, c_in, k = w.shape
    length = x.shape[-1]
    l_out = length - (k - 1) * dilation
    if l_out < 1:
        raise ShapeError(
            f"conv1d: input {x.shape} too short for kernel {w.shape} at dilation {dilation}"
        )
    # im2col: (..., k * C_in, L_out), tap-major to match w.transpose(0, 2, 1)
    cols = np.concatenate(
        [x.data[..., j * dilation : j * dilation + l_out] for j in range(k)], axis=-2
    )
    w2 = w.data.transpose(0, 2, 1).reshape(c_out, k * c_in)
    out = w2 @ cols

    def bw(g):
        gx = gw = None
        if x.requires_grad:
            gcols = w2.T @ g
            gx = np.zeros(x.shape)
            for j in range(k):
                gx[..., j * dilation : j * dilation + l_out] += gcols[..., j * c_in : (j + 1) * c_in, :]
        if w.requires_grad:
            gf = g.reshape(-1, c_out, l_out)
            cf = cols.reshape(-1, k * c_in, l_out)
            gw2 = np.tensordot(gf, cf, axes=([0, 2], [0, 2]))
            gw = gw2.reshape(c_out, k, c_in).transpose(0, 2, 1)
        return gx, gw

    return _make(out, "conv1d", (x, w), bw)


# -- structural --------------------------------------------------------------

def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(a % x.ndim for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), "transpose", (x,), lambda g: (g.transpose(inv),))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _make(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat: no inputs")
    nd = xs[0].ndim
    ax = axis % nd
    for t in xs[1:]:
        if t.ndim != nd or any(
            t.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax
        ):
            raise ShapeError(f"concat: shapes {xs[0].shape} and {t.shape} do not conform on axis {axis}")
    out = np.concatenate([t.data for t in xs], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def bw(g):
        idx = [slice(None)] * nd
        grads = []
        for i in range(len(xs)):
            idx[ax] = slice(bounds[i], bounds[i + 1])
            grads.append(g[tuple(idx)])
        return tuple(grads)

    return _make(out, "concat", tuple(xs), bw)


class _SliceGrad:
    """Gradient that is nonzero only on ``index`` of a ``shape``-d parent."""

    __slots__ = ("index", "grad", "shape", "basic")

    def __init__(self, index, grad, shape):
        self.index = index
        self.grad = grad
        self.shape = shape
        self.basic = _is_basic_index(index)

    def add_into(self, full: np.ndarray) -> np.ndarray:
        if self.basic:
            full[self.index] += self.grad
        else:
            np.add.at(full, self.index, self.grad)
        return full

    def dense(self) -> np.ndarray:
        return self.add_into(np.zeros(self.shape))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def slice_(x, index) -> Tensor:
    x = _as_tensor(x)
    out = np.array(x.data[index], dtype=np.float64)
    return _make(out, "slice", (x,), lambda g: (_SliceGrad(index, g, x.shape),))


# -- dispatch ----------------------------------------------------------------

_OPS: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "hadamard": mul,
    "div": div,
    "neg": neg,
    "scale": scale,
    "shift": shift,
    "power": power,
    "exp": exp,
    "log": log,
    "abs": abs_,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "huber": huber,
    "softmax": softmax,
    "sum": sum_,
    "mean": mean,
    "matmul": matmul,
    "bmm": matmul,
    "conv1d": conv1d,
    "transpose": transpose,
    "reshape": reshape,
    "slice": slice_,
}


def primitive_forward(kind: str, inputs: Sequence, **attrs) -> Tensor:
    """Apply the primitive named ``kind`` to ``inputs``.

    >>> primitive_forward("softmax", [tensor([0.0, 0.0])]).data
    array([0.5, 0.5])
    """
    if kind == "concat":
        return concat(inputs, **attrs)
    try:
        fn = _OPS[kind]
    except KeyError:
        raise UnsupportedOpError(f"unsupported op kind {kind!r}") from None
    return fn(*inputs, **attrs)


# -- reverse pass ------------------------------------------------------------

def _collect(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node_id in seen:
            continue
        seen.add(t.node_id)
        order.append(t)
        if t._node is not None:
            stack.extend(p for p in t._node.parents if p.requires_grad)
    order.sort(key=lambda t: t.node_id, reverse=True)
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> dict[int, np.ndarray]:
    """Propagate d(loss)/d(.) back to every leaf that requires grad.

    Leaf gradients are accumulated into ``.grad`` and also returned keyed by
    ``node_id``. The graph is released afterwards unless ``retain_graph``.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._freed:
        raise MissingNodeError("graph already released by a previous backward")
    if not loss.requires_grad:
        raise MissingNodeError("loss is not connected to any tensor that requires grad")

    nodes = _collect(loss)
    grads: dict[int, object] = {loss.node_id: np.ones(loss.shape)}
    owned: set[int] = set()  # accumulators allocated here, safe to update in place
    leaves: dict[int, np.ndarray] = {}
    for t in nodes:
        g = grads.pop(t.node_id, None)
        if g is None:
            continue
        if isinstance(g, _SliceGrad):
            g = g.dense()
        if t._node is None:
            leaves[t.node_id] = g
            t.grad = np.array(g) if t.grad is None else t.grad + g
            continue
        parent_grads = t._node.backward_fn(g)
        for p, pg in zip(t._node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            pid = p.node_id
            prev = grads.get(pid)
            if isinstance(pg, _SliceGrad):
                if prev is None:
                    grads[pid] = pg
                    continue
                if isinstance(prev, _SliceGrad):
                    prev = prev.dense()
                    owned.add(pid)
                elif pid not in owned:
                    prev = np.array(prev)
                    owned.add(pid)
                grads[pid] = pg.add_into(prev)
            elif prev is None:
                grads[pid] = pg
            elif isinstance(prev, _SliceGrad):
                grads[pid] = prev.add_into(np.array(pg))
                owned.add(pid)
            elif pid in owned:
                prev += pg
            else:
                grads[pid] = prev + pg
                owned.add(pid)
        if not retain_graph:
            t._node = None
            t._freed = True
    return leaves


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def finite_difference_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between backward gradients and central differences.

    The error per entry is ``|analytic - numeric| / max(1, |analytic|)``.
    With ``max_entries`` set, at most that many entries per input are probed,
    drawn with ``rng``; otherwise every entry is.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.grad = None
        t.requires_grad = True
    out = f(*inputs)
    if out.size != 1:
        raise GraphError(f"finite_difference_check needs a scalar function, got {out.shape}")
    if out.requires_grad:
        backward(out)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    with no_grad():
        for t, ga in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                rng = rng or np.random.default_rng(0)
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f(*inputs).data)
                flat[i] = orig - h
                fm = float(f(*inputs).data)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                a = ga.reshape(-1)[i]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
