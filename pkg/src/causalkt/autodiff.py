"""Tape-based reverse-mode automatic differentiation on numpy arrays.

Every op builds a new :class:`Tensor` holding a reference to its parents and a
closure that pushes the upstream gradient back into them. :func:`backward`
walks the graph once in reverse topological order and then frees it.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError


class Tensor:
    """A node in the computation graph.

    Leaves created with ``requires_grad=True`` are parameters; everything
    else is either a constant or an intermediate result.
    """

    __slots__ = ("value", "_grad", "parents", "_backward", "op", "requires_grad", "_consumed", "name")

    def __init__(self, value, requires_grad=False, name="", _parents=(), _op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self._grad = None
        self.parents = _parents
        self._backward = None
        self.op = _op
        self.requires_grad = requires_grad
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def grad(self):
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    def _accumulate(self, g, index=None):
        if not self.requires_grad:
            return
        if self._grad is None:
            if index is None:
                self._grad = np.array(g, dtype=np.float64, copy=True).reshape(self.value.shape)
                return
            self._grad = np.zeros_like(self.value)
        if index is None:
            self._grad += g
        elif any(isinstance(i, np.ndarray) and i.ndim > 0 for i in index):
            np.add.at(self._grad, index, g)
        else:
            self._grad[index] += g

    # operator sugar
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(value, requires_grad=False, name=""):
    return Tensor(value, requires_grad=requires_grad, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, op, backward):
    tracked = tuple(p for p in parents if p.requires_grad)
    out = Tensor(value, requires_grad=bool(tracked), _parents=tracked, _op=op)
    if tracked:
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- binary ops

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.value + b.value, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.value - b.value, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), "mul", backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out_value = a.value / b.value

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out_value / b.value, b.shape))

    return _make(out_value, (a, b), "div", backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return _make(a.value @ b.value, (a, b), "matmul", backward)


# ----------------------------------------------------------------- unary ops

def neg(a):
    a = as_tensor(a)
    return _make(-a.value, (a,), "neg", lambda g: a._accumulate(-g))


def scale(a, c):
    """Multiply by a constant scalar ``c`` (not differentiated)."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.value * c, (a,), "scale", lambda g: a._accumulate(g * c))


def _sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = as_tensor(a)
    s = _sigmoid(a.value)
    return _make(s, (a,), "sigmoid", lambda g: a._accumulate(g * s * (1.0 - s)))


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.value)
    return _make(t, (a,), "tanh", lambda g: a._accumulate(g * (1.0 - t * t)))


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.value)
    return _make(e, (a,), "exp", lambda g: a._accumulate(g * e))


def log(a):
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise DomainError("log: non-positive input")
    return _make(np.log(a.value), (a,), "log", lambda g: a._accumulate(g / a.value))


def softplus(a):
    """log(1 + exp(a)), computed without overflow."""
    a = as_tensor(a)
    x = a.value
    value = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return _make(value, (a,), "softplus", lambda g: a._accumulate(g * s))


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected 2-D, got shape {a.shape}")
    return _make(a.value.T, (a,), "transpose", lambda g: a._accumulate(g.T))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from None
    return _make(value, (a,), "reshape", lambda g: a._accumulate(g.reshape(old)))


def take(a, indices, axis=0):
    """Gather slices of ``a`` along ``axis`` (embedding lookup, time slicing)."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    if idx.ndim == 0:
        idx = int(idx)
    if np.size(idx) and (np.min(idx) < -a.shape[axis] or np.max(idx) >= a.shape[axis]):
        raise IndexError(f"take: index out of range for axis {axis} of size {a.shape[axis]}")
    value = np.take(a.value, idx, axis=axis)

    def backward(g):
        a._accumulate(g, (slice(None),) * (axis % a.ndim) + (idx,))

    return _make(value, (a,), "take", backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return _make(value, tuple(tensors), "concat", backward)


# ----------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    if a.value.size == 0:
        raise DomainError("sum: empty array")
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(value, (a,), "sum", backward)


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


def max(a, axis=None, keepdims=False):  # noqa: A001
    """Max reduction; the gradient flows to the first maximising entry."""
    a = as_tensor(a)
    if a.value.size == 0:
        raise DomainError("max: empty array")
    if axis is None:
        flat = int(np.argmax(a.value))
        index = np.unravel_index(flat, a.shape)
        value = a.value[index]
        if keepdims:
            value = np.reshape(value, (1,) * a.ndim)

        def backward(g):
            a._accumulate(np.reshape(g, ()), index)

        return _make(value, (a,), "max", backward)

    if a.ndim != 2 or axis not in (0, 1, -1, -2):
        raise DimensionError(f"max: axis reduction needs a 2-D array, got {a.shape}")
    axis = axis % 2
    arg = np.argmax(a.value, axis=axis)
    other = np.arange(a.shape[1 - axis])
    index = (other, arg) if axis == 1 else (arg, other)
    value = a.value[index]
    if keepdims:
        value = np.expand_dims(value, axis)

    def backward(g):
        a._accumulate(np.reshape(g, -1), index)

    return _make(value, (a,), "max", backward)


def sum_all(a):
    return sum(a)


def row_sum(a, keepdims=False):
    return sum(a, axis=1, keepdims=keepdims)


def col_sum(a, keepdims=False):
    return sum(a, axis=0, keepdims=keepdims)


def row_max(a, keepdims=False):
    return max(a, axis=1, keepdims=keepdims)


def global_max(a):
    return max(a)


# ------------------------------------------------------------------ backward

def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every parameter reachable from ``loss``.

    The graph is released afterwards; calling this twice on the same loss is
    an error.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise ContractError("backward: graph already consumed; rebuild the forward pass")
    loss._consumed = True
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss._grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node._grad if node._grad is not None else np.zeros_like(node.value))
            # intermediate nodes are done once their grad has been pushed
            node._backward = None
            node.parents = ()
            node._grad = None
    loss._grad = None


# ------------------------------------------------------------------ optimiser

class Adam:
    """Adam with bias correction, operating in place on parameter tensors."""

    def __init__(self, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads=None):
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise DimensionError("adam: number of gradients does not match parameters")
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            adam_step(p.value, g, m, v, self.t, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self):
        return {"t": self.t, "m": [m.tolist() for m in self.m], "v": [v.tolist() for v in self.v]}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.m = [np.asarray(m, dtype=np.float64).reshape(p.shape) for m, p in zip(state["m"], self.params)]
        self.v = [np.asarray(v, dtype=np.float64).reshape(p.shape) for v, p in zip(state["v"], self.params)]


def adam_step(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update of ``param`` with moment buffers ``m`` and ``v``.

    ``t`` is the 1-based step count used for bias correction.
    """
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise DimensionError(
            f"adam: shape mismatch param={param.shape} grad={grad.shape} m={m.shape} v={v.shape}"
        )
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(np.sum([np.sum(g * g) for g in grads])))
    if not np.isfinite(total):
        return grads, total
    if total > max_norm:
        factor = max_norm / total
        grads = [g * factor for g in grads]
    return grads, total
