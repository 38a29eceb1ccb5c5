"""Dense tensors with reverse-mode automatic differentiation.

A small tape-based engine: every operation run inside an active ``Graph``
appends its output node to the tape, and ``Graph.backward`` walks the tape
in exact reverse insertion order (insertion order is a topological order
because an op can only consume tensors that already exist).

Values are numpy arrays, float64 by default. Broadcasting is deliberately
restricted to the cases the layer code needs (same shape, scalar against
anything, row vector against matrix) so every backward rule stays easy to
audit. Anything else raises ``ShapeError``.
"""

from __future__ import annotations

import numpy as np

_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (float64 or float32)."""
    global _DTYPE
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _DTYPE = dtype


def default_dtype():
    return _DTYPE


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


class NonFiniteError(ValueError):
    pass


class Diagnostics:
    """Counters for recoverable numeric events, inspectable by tests."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.log_clamps = 0
        self.oov_lookups = 0
        self.zero_norm_similarity = 0


diagnostics = Diagnostics()

LOG_EPS = 1e-12  # probability floor before taking a log


class Tensor:
    """A dense n-dimensional value, optionally participating in a graph.

    ``data`` is a row-major numpy array; ``grad`` is allocated lazily on
    first accumulation and always matches ``data``'s shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None
        self._op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def assert_finite(self, what: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"{what} contains NaN or Inf")
        return self

    def __repr__(self):
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{op})"

    # Operator sugar; the functions below do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


_ACTIVE: list["Graph"] = []


class Graph:
    """Append-only tape of op outputs; owns backward traversal.

    One graph is owned by one thread. Intermediate node grads are consumed
    and cleared by ``backward``, so parameter gradients accumulate cleanly
    across repeated calls.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        _accum(loss, np.ones_like(loss.data))
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        for node in self.nodes:
            node.grad = None


def backward(loss: Tensor) -> None:
    """Backward through the innermost active graph."""
    if not _ACTIVE:
        raise GraphError("backward requires an active Graph")
    _ACTIVE[-1].backward(loss)


def _tracking(*tensors: Tensor) -> bool:
    return bool(_ACTIVE) and any(t.requires_grad for t in tensors)


def _register(out: Tensor, op: str, bw) -> None:
    out.requires_grad = True
    out._backward = bw
    out._op = op
    _ACTIVE[-1].nodes.append(out)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._backward is not None):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DTYPE), requires_grad=requires_grad)


def param(shape, rng: np.random.Generator, scale: float = 0.02) -> Tensor:
    """Trainable leaf, uniform(-scale, scale) init."""
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


# ---------------------------------------------------------------------------
# elementwise arithmetic with restricted broadcasting


def _is_scalar_shape(s) -> bool:
    return s == () or s == (1,)


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` for the broadcast cases we permit."""
    if g.shape == shape:
        return g
    if _is_scalar_shape(shape):
        return np.sum(g).reshape(shape)
    # row vector (n,) broadcast over (m, n)
    if len(shape) == 1 and g.ndim == 2 and g.shape[1] == shape[0]:
        return np.sum(g, axis=0)
    raise ShapeError(f"cannot reduce grad {g.shape} to {shape}")


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or _is_scalar_shape(sa) or _is_scalar_shape(sb):
        return
    if len(sa) == 1 and len(sb) == 2 and sb[1] == sa[0]:
        return
    if len(sb) == 1 and len(sa) == 2 and sa[1] == sb[0]:
        return
    raise ShapeError(f"{opname}: incompatible shapes {sa} and {sb}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)
    if _tracking(a, b):
        def bw(g):
            _accum(a, _reduce_to(g, a.shape))
            _accum(b, _reduce_to(g, b.shape))
        _register(out, "add", bw)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    if _tracking(a):
        def bw(g):
            _accum(a, -g)
        _register(out, "neg", bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = Tensor(a.data * b.data)
    if _tracking(a, b):
        ad, bd = a.data, b.data
        def bw(g):
            _accum(a, _reduce_to(g * bd, a.shape))
            _accum(b, _reduce_to(g * ad, b.shape))
        _register(out, "mul", bw)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a / b; same shapes or scalar divisor."""
    if not (a.shape == b.shape or _is_scalar_shape(b.shape)):
        raise ShapeError(f"div: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data / b.data)
    if _tracking(a, b):
        ad, bd = a.data, b.data
        def bw(g):
            _accum(a, _reduce_to(g / bd, a.shape))
            _accum(b, _reduce_to(-g * ad / (bd * bd), b.shape))
        _register(out, "div", bw)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    out = Tensor(a.data * c)
    if _tracking(a):
        def bw(g):
            _accum(a, g * c)
        _register(out, "scale", bw)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + c)
    if _tracking(a):
        def bw(g):
            _accum(a, g)
        _register(out, "add_scalar", bw)
    return out


# ---------------------------------------------------------------------------
# matrix ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    if _tracking(a, b):
        ad, bd = a.data, b.data
        def bw(g):
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        _register(out, "matmul", bw)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")
    out = Tensor(a.data.T.copy())
    if _tracking(a):
        def bw(g):
            _accum(a, g.T)
        _register(out, "transpose", bw)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if _tracking(a):
        orig = a.shape
        def bw(g):
            _accum(a, g.reshape(orig))
        _register(out, "reshape", bw)
    return out


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    if _tracking(*parts):
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)
        def bw(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(p, g[tuple(idx)])
        _register(out, "concat", bw)
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward zero-pads."""
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(f"narrow [{start}:{start + length}] outside axis {axis} of {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(a.data[idx].copy())
    if _tracking(a):
        def bw(g):
            full = np.zeros_like(a.data)
            full[idx] = g
            _accum(a, full)
        _register(out, "narrow", bw)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    if _tracking(a):
        mask = a.data > 0
        def bw(g):
            _accum(a, g * mask)
        _register(out, "relu", bw)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    if _tracking(a):
        def bw(g):
            _accum(a, g * (1.0 - y * y))
        _register(out, "tanh", bw)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-a.data)),
                 np.exp(a.data) / (1.0 + np.exp(a.data)))
    out = Tensor(y)
    if _tracking(a):
        def bw(g):
            _accum(a, g * y * (1.0 - y))
        _register(out, "sigmoid", bw)
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    if _tracking(a):
        def bw(g):
            _accum(a, g * y)
        _register(out, "exp", bw)
    return out


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    out = Tensor(y)
    if _tracking(a):
        def bw(g):
            _accum(a, g * 0.5 / y)
        _register(out, "sqrt", bw)
    return out


def safe_log(a: Tensor, eps: float = LOG_EPS) -> Tensor:
    """log with the argument floored at eps.

    The gradient is evaluated at the clamped value, so it stays defined
    (and bounded by 1/eps) when a probability underflows to zero. Clamp
    events are counted in ``diagnostics.log_clamps``.
    """
    clamped = np.maximum(a.data, eps)
    n_clamped = int(np.sum(a.data < eps))
    if n_clamped:
        diagnostics.log_clamps += n_clamped
    out = Tensor(np.log(clamped))
    if _tracking(a):
        def bw(g):
            _accum(a, g / clamped)
        _register(out, "safe_log", bw)
    return out


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(np.sum(a.data, axis=axis))
    if _tracking(a):
        def bw(g):
            if axis is None:
                _accum(a, np.full_like(a.data, float(g)))
            else:
                _accum(a, np.expand_dims(g, axis) * np.ones_like(a.data))
        _register(out, "sum", bw)
    return out


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    out = Tensor(np.mean(a.data, axis=axis))
    if _tracking(a):
        def bw(g):
            if axis is None:
                _accum(a, np.full_like(a.data, float(g) / n))
            else:
                _accum(a, np.expand_dims(g, axis) * np.ones_like(a.data) / n)
        _register(out, "mean", bw)
    return out


# ---------------------------------------------------------------------------
# softmax family


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.shape == () or a.shape[axis] < 1:
        raise ShapeError(f"softmax over empty axis {axis} of {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = Tensor(y)
    if _tracking(a):
        def bw(g):
            dot = np.sum(g * y, axis=axis, keepdims=True)
            _accum(a, y * (g - dot))
        _register(out, "softmax", bw)
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.shape == () or a.shape[axis] < 1:
        raise ShapeError(f"log_softmax over empty axis {axis} of {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)
    if _tracking(a):
        sm = np.exp(y)
        def bw(g):
            _accum(a, g - sm * np.sum(g, axis=axis, keepdims=True))
        _register(out, "log_softmax", bw)
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a 1-D logit vector."""
    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy expects 1-D logits, got {logits.shape}")
    n = logits.shape[0]
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range for {n} classes")
    shifted = logits.data - np.max(logits.data)
    lse = np.log(np.sum(np.exp(shifted)))
    out = Tensor(lse - shifted[target])
    if _tracking(logits):
        sm = np.exp(shifted - lse)
        def bw(g):
            d = sm.copy()
            d[target] -= 1.0
            _accum(logits, d * float(g))
        _register(out, "cross_entropy", bw)
    return out


# ---------------------------------------------------------------------------
# gather / scatter


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather; backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table with {table.shape[0]} rows")
    out = Tensor(table.data[ids])
    if _tracking(table):
        def bw(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)
        _register(out, "embedding", bw)
    return out


def gather(vec: Tensor, ids) -> Tensor:
    """Pick elements of a 1-D tensor; repeated ids allowed."""
    ids = np.asarray(ids, dtype=np.intp)
    if vec.ndim != 1:
        raise ShapeError(f"gather expects a 1-D tensor, got {vec.shape}")
    out = Tensor(vec.data[ids])
    if _tracking(vec):
        def bw(g):
            if vec.grad is None:
                vec.grad = np.zeros_like(vec.data)
            np.add.at(vec.grad, ids, g)
        _register(out, "gather", bw)
    return out


def take(vec: Tensor, i: int) -> Tensor:
    """Single element of a 1-D tensor as a 0-d tensor."""
    return reshape(gather(vec, [i]), ())


def scatter_sum(weights: Tensor, ids, size: int) -> Tensor:
    """Sum weights into a zero vector of the given size at positions ids."""
    ids = np.asarray(ids, dtype=np.intp)
    if weights.ndim != 1 or len(ids) != weights.shape[0]:
        raise ShapeError(f"scatter_sum: {weights.shape} weights vs {len(ids)} ids")
    acc = np.zeros(size, dtype=weights.data.dtype)
    np.add.at(acc, ids, weights.data)
    out = Tensor(acc)
    if _tracking(weights):
        def bw(g):
            _accum(weights, g[ids])
        _register(out, "scatter_sum", bw)
    return out


# ---------------------------------------------------------------------------
# structured ops


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift per feature."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm params must be ({d},), got {gain.shape} and {bias.shape}")
    mu = np.mean(x.data, axis=-1, keepdims=True)
    var = np.var(x.data, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data)
    if _tracking(x, gain, bias):
        gd = gain.data
        def bw(g):
            axes = tuple(range(g.ndim - 1))
            _accum(gain, np.sum(g * xhat, axis=axes).reshape(gain.shape))
            _accum(bias, np.sum(g, axis=axes).reshape(bias.shape))
            dxhat = g * gd
            m1 = np.mean(dxhat, axis=-1, keepdims=True)
            m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))
        _register(out, "layer_norm", bw)
    return out


def scale_rows(m: Tensor, w: Tensor) -> Tensor:
    """Scale row i of a matrix by w[i]."""
    if m.ndim != 2 or w.shape != (m.shape[0],):
        raise ShapeError(f"scale_rows: matrix {m.shape} vs weights {w.shape}")
    out = Tensor(m.data * w.data[:, None])
    if _tracking(m, w):
        md, wd = m.data, w.data
        def bw(g):
            _accum(m, g * wd[:, None])
            _accum(w, np.sum(g * md, axis=1))
        _register(out, "scale_rows", bw)
    return out


def repeat_rows(row: Tensor, n: int) -> Tensor:
    """Tile a 1-D tensor into n identical rows; backward sums over rows."""
    if row.ndim != 1:
        raise ShapeError(f"repeat_rows expects a 1-D tensor, got {row.shape}")
    out = Tensor(np.tile(row.data, (n, 1)))
    if _tracking(row):
        def bw(g):
            _accum(row, np.sum(g, axis=0))
        _register(out, "repeat_rows", bw)
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-D tensors as a 0-d tensor."""
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: incompatible shapes {a.shape} and {b.shape}")
    return tsum(mul(a, b))
