"""Reverse-mode automatic differentiation over dense float64 arrays.

Every value that participates in training is a ``Tensor`` wrapping a numpy
array. Operations build a DAG of backward closures; ``backward`` linearizes
the graph into a ``Tape`` (inputs before consumers) and walks it in reverse
exactly once. Scalars are 0-d tensors.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "ShapeError", "no_grad", "grad_enabled",
    "constant", "zeros", "add", "sub", "mul", "matmul", "concat", "stack",
    "slice_", "reshape", "sum_", "mean", "exp", "tanh", "sigmoid", "relu",
    "softplus", "sqrt", "softmax", "squared_l2", "binary_cross_entropy",
    "backward", "finite_diff_check",
]

BCE_CLAMP = 1e-7  # probabilities clipped to [BCE_CLAMP, 1 - BCE_CLAMP]


class ShapeError(ValueError):
    """Operand shapes do not conform to the operation's rule."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager: ops executed inside record no backward closures."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense float64 value node, optionally carrying a gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_inputs", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 _inputs: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = op
        self._inputs = _inputs
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar; non-Tensor operands are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(self.data.shape[0])
            if step != 1:
                raise ShapeError("slice: only unit steps are supported")
            return slice_(self, start, stop, axis=0)
        if isinstance(key, int):
            n = self.data.shape[0]
            if key < 0:
                key += n
            return reshape(slice_(self, key, key + 1, axis=0), self.data.shape[1:])
        raise TypeError(f"unsupported index {key!r}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """Non-differentiable tensor from array-like data."""
    return Tensor(x)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def _check_finite(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        s = float(t.data.sum())
        # s - s is NaN for any non-finite sum; finite data can only hit the
        # slow path through (harmless) overflow of the screening sum
        if s - s != 0.0 and not np.isfinite(t.data).all():
            raise ValueError(f"{op}: non-finite values in input of shape {t.shape}")


def _node(data: np.ndarray, inputs: Sequence[Tensor], bw: Callable, op: str) -> Tensor:
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        return Tensor(data, requires_grad=True, op=op,
                      _inputs=tuple(t for t in inputs if t.requires_grad),
                      _backward=bw)
    return Tensor(data, op=op)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64)
        else:
            t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting rules)

def _broadcast_op(a: Tensor, b: Tensor, fn, d_a, d_b, op: str) -> Tensor:
    _check_finite(op, a, b)
    try:
        out = fn(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e

    def bw(g):
        _accum(a, _unbroadcast(d_a(g), a.shape))
        _accum(b, _unbroadcast(d_b(g), b.shape))

    return _node(out, (a, b), bw, op)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_op(a, b, np.add, lambda g: g, lambda g: g, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_op(a, b, np.subtract, lambda g: g, lambda g: -g, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_op(a, b, np.multiply,
                         lambda g: g * b.data, lambda g: g * a.data, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with 1-d promotion: (m,k)@(k,n), (k,)@(k,n), (m,k)@(k,), (k,)@(k,)."""
    _check_finite("matmul", a, b)
    if a.data.ndim > 2 or b.data.ndim > 2 or a.data.ndim == 0 or b.data.ndim == 0:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} (only 1-d/2-d supported)")
    a2 = a.data[None, :] if a.data.ndim == 1 else a.data
    b2 = b.data[:, None] if b.data.ndim == 1 else b.data
    if a2.shape[1] != b2.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not contract")
    out2 = a2 @ b2
    out = out2
    if a.data.ndim == 1:
        out = out[0]
    if b.data.ndim == 1:
        out = out[..., 0]

    def bw(g):
        g2 = np.atleast_2d(g)
        if a.data.ndim == 1 and b.data.ndim == 1:
            g2 = g2.reshape(1, 1)
        elif a.data.ndim == 1:
            g2 = g2.reshape(1, -1)
        elif b.data.ndim == 1:
            g2 = g2.reshape(-1, 1)
        ga = g2 @ b2.T
        gb = a2.T @ g2
        _accum(a, ga[0] if a.data.ndim == 1 else ga)
        _accum(b, gb[:, 0] if b.data.ndim == 1 else gb)

    return _node(out, (a, b), bw, "matmul")


# ---------------------------------------------------------------------------
# structural ops

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    # pure data movement: finiteness is screened where values are computed
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(
            f"concat: shapes {[t.shape for t in tensors]} do not align on axis {axis}") from e
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _node(out, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack: empty input list")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors])

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, g[i])

    return _node(out, tensors, bw, "stack")


def slice_(t: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    n = t.data.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice: range [{start}, {stop}) out of bounds for axis {axis} of shape {t.shape}")
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = t.data[idx]

    def bw(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[idx] += g

    return _node(out, (t,), bw, "slice")


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    try:
        out = t.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {t.shape} as {shape}") from e

    def bw(g):
        _accum(t, g.reshape(t.data.shape))

    return _node(out, (t,), bw, "reshape")


# ---------------------------------------------------------------------------
# reductions

def sum_(t: Tensor, axis: int | None = None) -> Tensor:
    _check_finite("sum", t)
    out = t.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            _accum(t, np.broadcast_to(g, t.data.shape))
        else:
            _accum(t, np.broadcast_to(np.expand_dims(g, axis), t.data.shape))

    return _node(out, (t,), bw, "sum")


def mean(t: Tensor, axis: int | None = None) -> Tensor:
    _check_finite("mean", t)
    out = t.data.mean(axis=axis)
    count = t.data.size if axis is None else t.data.shape[axis]

    def bw(g):
        if axis is None:
            _accum(t, np.broadcast_to(g / count, t.data.shape))
        else:
            _accum(t, np.broadcast_to(np.expand_dims(g / count, axis), t.data.shape))

    return _node(out, (t,), bw, "mean")


def squared_l2(t: Tensor) -> Tensor:
    """Sum of squared entries, a scalar."""
    _check_finite("squared-l2", t)
    out = np.float64((t.data * t.data).sum())

    def bw(g):
        _accum(t, (2.0 * g) * t.data)

    return _node(out, (t,), bw, "squared-l2")


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def _pointwise(t: Tensor, out: np.ndarray, local, op: str) -> Tensor:
    def bw(g):
        _accum(t, g * local())

    return _node(out, (t,), bw, op)


def exp(t: Tensor) -> Tensor:
    _check_finite("exp", t)
    out = np.exp(t.data)
    return _pointwise(t, out, lambda: out, "exp")


def tanh(t: Tensor) -> Tensor:
    _check_finite("tanh", t)
    out = np.tanh(t.data)
    return _pointwise(t, out, lambda: 1.0 - out * out, "tanh")


def sigmoid(t: Tensor) -> Tensor:
    _check_finite("sigmoid", t)
    out = 1.0 / (1.0 + np.exp(-np.clip(t.data, -500.0, 500.0)))
    return _pointwise(t, out, lambda: out * (1.0 - out), "sigmoid")


def relu(t: Tensor) -> Tensor:
    _check_finite("relu", t)
    out = np.maximum(t.data, 0.0)
    return _pointwise(t, out, lambda: (t.data > 0).astype(np.float64), "relu")


def softplus(t: Tensor) -> Tensor:
    _check_finite("softplus", t)
    # stable: max(x, 0) + log1p(exp(-|x|))
    out = np.maximum(t.data, 0.0) + np.log1p(np.exp(-np.abs(t.data)))
    return _pointwise(t, out, lambda: 1.0 / (1.0 + np.exp(-np.clip(t.data, -500.0, 500.0))), "softplus")


def sqrt(t: Tensor) -> Tensor:
    _check_finite("sqrt", t)
    if (t.data < 0).any():
        raise ValueError("sqrt: negative input")
    out = np.sqrt(t.data)
    # denominator guarded so a gradient at exactly 0 stays finite
    return _pointwise(t, out, lambda: 0.5 / np.maximum(out, 1e-150), "sqrt")


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    _check_finite("softmax", t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(t, out * (g - inner))

    return _node(out, (t,), bw, "softmax")


def binary_cross_entropy(p: Tensor, target) -> Tensor:
    """Elementwise BCE; probabilities clamped away from {0, 1}. Targets carry no gradient."""
    _check_finite("binary-cross-entropy", p)
    y = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ShapeError(f"binary-cross-entropy: shapes {p.shape} and {y.shape} differ")
    if not np.isfinite(y).all():
        raise ValueError("binary-cross-entropy: non-finite target")
    pc = np.clip(p.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    out = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    inside = (p.data > BCE_CLAMP) & (p.data < 1.0 - BCE_CLAMP)

    def bw(g):
        _accum(p, g * inside * (pc - y) / (pc * (1.0 - pc)))

    return _node(out, (p,), bw, "binary-cross-entropy")


# ---------------------------------------------------------------------------
# backward pass

class Tape:
    """Linearized computation graph: inputs precede consumers, root last."""

    __slots__ = ("nodes",)

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for u in t._inputs:
                if id(u) not in seen:
                    stack.append((u, False))
        return cls(order)


def backward(root: Tensor) -> None:
    """Reverse-mode pass from a scalar root; gradients accumulate into .grad."""
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    tape = Tape.from_root(root)
    _accum(root, np.ones_like(root.data))
    for t in reversed(tape.nodes):
        if t._backward is not None and t.grad is not None:
            t._backward(t.grad)


# ---------------------------------------------------------------------------
# gradient verification oracle

def finite_diff_check(f: Callable[[Tensor], Tensor], point: Tensor,
                      step: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |central difference|).

    ``f`` must be scalar-valued and finite near ``point``. The analytic side
    runs reverse mode once; the differenced side re-evaluates ``f`` forward
    only, so the two paths share no gradient code.
    """
    if step <= 0:
        raise ValueError("finite_diff_check: step must be positive")
    x = Tensor(point.data.copy(), requires_grad=True)
    out = f(x)
    if out.data.size != 1:
        raise ShapeError("finite_diff_check: f must be scalar-valued")
    if not np.isfinite(out.data).all():
        raise ValueError("finite_diff_check: non-finite evaluation at point")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    worst = 0.0
    flat = x.data.reshape(-1)
    a_flat = analytic.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f(x).data)
            flat[i] = orig - step
            lo = float(f(x).data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise ValueError("finite_diff_check: non-finite evaluation near point")
            fd = (hi - lo) / (2.0 * step)
            err = abs(a_flat[i] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst
