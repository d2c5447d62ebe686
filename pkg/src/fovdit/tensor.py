"""Dense tensors with reverse-mode gradients, backed by numpy.

Every operation is eager: values are computed immediately and, when any
input requires a gradient, a backward closure is attached. Gradients flow
in a fixed topological order, and every reduction uses numpy's
deterministic summation, so repeated runs on one platform produce
bit-identical results.

Arrays are float32 by default; tests run the same graph in float64 so
finite-difference tolerances are meaningful.
"""

from __future__ import annotations

import numpy as np


class GraphError(RuntimeError):
    """Backward was requested on a node that is not part of a graph."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A numpy array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Learnable tensor; its gradient is allocated (zero) on creation."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.grad = np.zeros_like(self.data)


def _ensure_grad(t: Tensor):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _node(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _grad_enabled:
        live = tuple(p for p in parents if p.requires_grad)
        if live:
            out.requires_grad = True
            out._parents = live
            out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        data = a.data + b

        def bw(g):
            _ensure_grad(a)
            a.grad += g

        return _node(data, (a,), bw)
    b = _coerce(b, a)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            _ensure_grad(a)
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            _ensure_grad(b)
            b.grad += _unbroadcast(g, b.data.shape)

    return _node(data, (a, b), bw)


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return add(a, -b)
    return add(a, neg(b))


def neg(a: Tensor) -> Tensor:
    data = -a.data

    def bw(g):
        _ensure_grad(a)
        a.grad -= g

    return _node(data, (a,), bw)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        s = float(b)
        data = a.data * s

        def bw(g):
            _ensure_grad(a)
            a.grad += g * s

        return _node(data, (a,), bw)
    b = _coerce(b, a)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            _ensure_grad(a)
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.requires_grad:
            _ensure_grad(b)
            b.grad += _unbroadcast(g * a.data, b.data.shape)

    return _node(data, (a, b), bw)


def silu(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-x.data))
    data = x.data * sig

    def bw(g):
        _ensure_grad(x)
        x.grad += g * (sig * (1.0 + x.data * (1.0 - sig)))

    return _node(data, (x,), bw)


# ---------------------------------------------------------------------------
# reductions


def tsum(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bw(g):
        _ensure_grad(x)
        x.grad += g

    return _node(data, (x,), bw)


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    data = np.asarray(x.data.sum() / n, dtype=x.data.dtype)

    def bw(g):
        _ensure_grad(x)
        x.grad += g / n

    return _node(data, (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"inner extents differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            _ensure_grad(a)
            a.grad += g @ b.data.T
        if b.requires_grad:
            _ensure_grad(b)
            b.grad += a.data.T @ g

    return _node(data, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over the leading axis: (B,m,k) @ (B,k,n) -> (B,m,n)."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"bmm expects matching 3-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[2] != b.data.shape[1]:
        raise ShapeError(f"inner extents differ: {a.data.shape} @ {b.data.shape}")
    B, m, _ = a.data.shape
    n = b.data.shape[2]
    data = np.empty((B, m, n), dtype=a.data.dtype)
    for i in range(B):
        np.matmul(a.data[i], b.data[i], out=data[i])

    def bw(g):
        if a.requires_grad:
            ga = _ensure_grad(a)
            for i in range(B):
                ga[i] += g[i] @ b.data[i].T
        if b.requires_grad:
            gb = _ensure_grad(b)
            for i in range(B):
                gb[i] += a.data[i].T @ g[i]

    return _node(data, (a, b), bw)


# ---------------------------------------------------------------------------
# normalization / attention primitives


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, with per-row max subtraction."""
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    denom = e.sum(axis=-1, keepdims=True)
    data = e / denom

    def bw(g):
        _ensure_grad(x)
        dot = (g * data).sum(axis=-1, keepdims=True)
        x.grad += data * (g - dot)

    return _node(data, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then optionally affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    if gain is not None:
        data = xhat * gain.data + (bias.data if bias is not None else 0.0)
    else:
        data = xhat
    d = x.data.shape[-1]

    def bw(g):
        gh = g * gain.data if gain is not None else g
        if x.requires_grad:
            _ensure_grad(x)
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x.grad += inv * (gh - m1 - xhat * m2)
        if gain is not None and gain.requires_grad:
            _ensure_grad(gain)
            gain.grad += _unbroadcast(g * xhat, gain.data.shape)
        if bias is not None and bias.requires_grad:
            _ensure_grad(bias)
            bias.grad += _unbroadcast(g, bias.data.shape)

    parents = (x,) + ((gain,) if gain is not None else ()) + ((bias,) if bias is not None else ())
    del d
    return _node(data, parents, bw)


def rope_rotate(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate channel pairs (2k, 2k+1) of the last axis by precomputed phases.

    `cos`/`sin` are plain arrays broadcastable to x, with pair channels
    repeated so cos[..., 2k] == cos[..., 2k+1].
    """
    if x.data.shape[-1] % 2:
        raise ShapeError("rope_rotate needs an even last axis")
    data = x.data * cos + _rotate_half(x.data) * sin

    def bw(g):
        _ensure_grad(x)
        x.grad += g * cos - _rotate_half(g * sin)

    return _node(data, (x,), bw)


def _rotate_half(a: np.ndarray) -> np.ndarray:
    """Map pairs (u, v) on the last axis to (-v, u)."""
    out = np.empty_like(a)
    out[..., 0::2] = -a[..., 1::2]
    out[..., 1::2] = a[..., 0::2]
    return out


# ---------------------------------------------------------------------------
# shape and indexing


def reshape(x: Tensor, shape) -> Tensor:
    data = np.ascontiguousarray(x.data).reshape(shape)
    old = x.data.shape

    def bw(g):
        _ensure_grad(x)
        x.grad += g.reshape(old)

    return _node(data, (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    data = np.ascontiguousarray(x.data.transpose(axes))
    inv = np.argsort(axes)

    def bw(g):
        _ensure_grad(x)
        x.grad += g.transpose(inv)

    return _node(data, (x,), bw)


def concat(parts, axis: int = 0) -> Tensor:
    datas = [p.data for p in parts]
    data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offs = np.cumsum([0] + sizes)

    def bw(g):
        for p, o, n in zip(parts, offs, sizes):
            if p.requires_grad:
                _ensure_grad(p)
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(o, o + n)
                p.grad += g[tuple(sl)]

    return _node(data, tuple(parts), bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = np.ascontiguousarray(x.data[sl])

    def bw(g):
        _ensure_grad(x)
        x.grad[sl] += g

    return _node(data, (x,), bw)


def gather_rows(x: Tensor, idx: np.ndarray, unique: bool = False) -> Tensor:
    """Select rows (first axis) by an integer index array.

    Set `unique=True` when indices are promised distinct; backward then
    uses fast fancy-index accumulation instead of np.add.at.
    """
    idx = np.asarray(idx, dtype=np.intp)
    data = x.data[idx]

    def bw(g):
        _ensure_grad(x)
        if unique:
            x.grad[idx] += g
        else:
            np.add.at(x.grad, idx, g)

    return _node(data, (x,), bw)


def repeat_rows(x: Tensor, counts: np.ndarray) -> Tensor:
    """Repeat row i of x counts[i] times (contiguous segments)."""
    counts = np.asarray(counts, dtype=np.intp)
    data = np.repeat(x.data, counts, axis=0)
    offsets = np.zeros(len(counts), dtype=np.intp)
    np.cumsum(counts[:-1], out=offsets[1:])

    def bw(g):
        _ensure_grad(x)
        x.grad += np.add.reduceat(g, offsets, axis=0)

    return _node(data, (x,), bw)


# ---------------------------------------------------------------------------
# backward driver


def backward(loss: Tensor):
    """Populate gradients of everything `loss` depends on.

    The loss must be a scalar node attached to a graph; the traversal
    order is a fixed topological order, so accumulation is deterministic.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad or loss._backward is None:
        raise GraphError("backward called on a detached node (no graph attached)")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
