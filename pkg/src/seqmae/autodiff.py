"""Dense tensors with reverse-mode automatic differentiation.

Small, numpy-backed, and strict: every op validates shapes, checks its
output for NaN/Inf (fail-fast, never propagated), and registers an exact
backward rule on the tape. float32 is the working precision; float64 is
used for gradient verification via :func:`finite_difference_check`.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateRowError,
    NonFiniteError,
    ShapeError,
)

DEFAULT_DTYPE = np.float32

_ALLOWED_DTYPES = (np.float32, np.float64)


class _Node:
    """One tape entry: op id, parent tensors, and the saved backward rule."""

    __slots__ = ("op", "parents", "backward")

    def __init__(self, op: str, parents: tuple["Tensor", ...], backward: Callable):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    """A contiguous float array plus an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            # float arrays keep their precision; everything else enters as float32
            if isinstance(data, np.ndarray) and data.dtype in (np.dtype(np.float32), np.dtype(np.float64)):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor constructed from non-finite data")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping -------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backprop(self)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self))

    def __radd__(self, other):
        return add(_coerce(other, self), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    def __rmul__(self, other):
        return mul(_coerce(other, self), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _result(op: str, out: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    if not np.isfinite(out).all():
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.requires_grad = any(p.requires_grad for p in parents)
    t._node = _Node(op, parents, backward) if t.requires_grad else None
    return t


def _same_dtype(op: str, *tensors: Tensor):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"{op}: mixed dtypes {sorted(d.name for d in dtypes)}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("add", a, b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("sub", a, b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("mul", a, b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _result("mul", out, (a, b), bwd)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _result("exp", out, (a,), bwd)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    ad = a.data

    def bwd(g):
        return (g / ad,)

    return _result("log", out, (a,), bwd)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result("sum", np.asarray(out), (a,), bwd)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.data.size if axis is None else np.prod(
        [shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    inv = np.asarray(1.0 / count, dtype=a.dtype)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * inv, shape).copy(),)

    return _result("mean", np.asarray(out), (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh form.

    y = 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))
    with sqrt(2/pi) = 0.7978845608028654.
    """
    k = np.asarray(0.7978845608028654, dtype=a.dtype)
    c = np.asarray(0.044715, dtype=a.dtype)
    x = a.data
    inner = k * (x + c * x * x * x)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bwd(g):
        sech2 = 1.0 - t * t
        local = 0.5 * (1.0 + t) + 0.5 * x * sech2 * k * (1.0 + 3.0 * c * x * x)
        return (g * local,)

    return _result("gelu", out.astype(a.dtype, copy=False), (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("matmul", a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    if a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul leading dims must match exactly: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.swapaxes(-1, -2), ad.swapaxes(-1, -2) @ g

    return _result("matmul", out, (a, b), bwd)


def dense_affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y[..., j] = sum_k x[..., k] * w[k, j] + b[j]."""
    _same_dtype("dense_affine", x, w, b)
    if w.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError(f"dense_affine expects 2-D weight and 1-D bias, got {w.shape} and {b.shape}")
    p, q = w.shape
    if x.shape[-1] != p:
        raise ShapeError(f"dense_affine: input {x.shape} does not match weight {w.shape}")
    if b.shape[0] != q:
        raise ShapeError(f"dense_affine: bias {b.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, p)
    out = (x2 @ w.data + b.data).reshape(*lead, q)

    def bwd(g):
        g2 = g.reshape(-1, q)
        gx = (g2 @ w.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _result("dense_affine", out, (x, w, b), bwd)


def dense(x: Tensor, w: Tensor) -> Tensor:
    """y[..., j] = sum_k x[..., k] * w[k, j] (dense_affine without the bias)."""
    _same_dtype("dense", x, w)
    if w.data.ndim != 2:
        raise ShapeError(f"dense expects a 2-D weight, got {w.shape}")
    p, q = w.shape
    if x.shape[-1] != p:
        raise ShapeError(f"dense: input {x.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, p)
    out = (x2 @ w.data).reshape(*lead, q)

    def bwd(g):
        g2 = g.reshape(-1, q)
        return (g2 @ w.data.T).reshape(x.shape), x2.T @ g2

    return _result("dense", out, (x, w), bwd)


def softmax_masked(scores: Tensor, keep: np.ndarray) -> Tensor:
    """Row softmax over the last axis, restricted to kept keys.

    Masked-out entries get probability exactly 0 (hard exclusion, not an
    additive penalty), and each row normalizes over its kept keys only.
    `keep` is a boolean array broadcastable to `scores.shape`.
    """
    keep = np.asarray(keep, dtype=bool)
    try:
        keep_b = np.broadcast_to(keep, scores.shape)
    except ValueError as exc:
        raise ShapeError(f"keep mask {keep.shape} does not broadcast to scores {scores.shape}") from exc
    if not keep_b.any(axis=-1).all():
        raise DegenerateRowError("softmax_masked: a row has every key masked out")
    shifted = np.where(keep_b, scores.data, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    z = np.exp(shifted)
    probs = z / z.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (probs * g).sum(axis=-1, keepdims=True)
        return (probs * (g - inner),)

    return _result("softmax_masked", probs.astype(scores.dtype, copy=False), (scores,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Standardize each row of the last axis, then scale and shift."""
    _same_dtype("layer_norm", x, gamma, beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must be ({d},), got {gamma.shape} and {beta.shape}")
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        lead_axes = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=lead_axes)
        g_beta = g.sum(axis=lead_axes)
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx.astype(x.dtype, copy=False), g_gamma, g_beta

    return _result("layer_norm", out.astype(x.dtype, copy=False), (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# shape / indexing ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(old),)

    return _result("reshape", out, (a,), bwd)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(int(i) for i in np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _result("transpose", out, (a,), bwd)


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ContractError("concat: empty input")
    _same_dtype("concat", *parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return _result("concat", out, tuple(parts), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = np.ascontiguousarray(a.data[idx])
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _result("slice_axis", out, (a,), bwd)


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; duplicate indices sum their gradients."""
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows expects a 2-D tensor, got {a.shape}")
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ContractError(f"take_rows: index out of range for {a.shape[0]} rows")
    out = a.data[index]
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _result("take_rows", out, (a,), bwd)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = np.ascontiguousarray(np.broadcast_to(a.data, shape))
    old = a.shape

    def bwd(g):
        return (_unbroadcast(g, old),)

    return _result("broadcast_to", out, (a,), bwd)


# ---------------------------------------------------------------------------
# backpropagation
# ---------------------------------------------------------------------------


def backprop(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

    The tape is traversed in reverse topological order exactly once;
    repeated calls without zero_grad() add into the same accumulators.
    """
    if loss.data.size != 1:
        raise ContractError(f"backprop: loss must be scalar, got shape {loss.shape}")
    if loss._node is None:
        if loss.requires_grad:
            seed = np.ones_like(loss.data)
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return

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

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._node is None:
            t.grad = g if t.grad is None else t.grad + g
            continue
        parent_grads = t._node.backward(g)
        for parent, pg in zip(t._node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(
                    f"op '{t._node.op}' backward produced grad {pg.shape} for parent {parent.shape}"
                )
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg.astype(parent.dtype, copy=False)


def finite_difference_check(
    forward: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    samples_per_param: int = 8,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central differences.

    `forward` rebuilds the scalar loss from scratch on every call; params
    are perturbed in place one coordinate at a time. Returns the maximum of
    |g_analytic - g_central| / max(|g_analytic|, |g_central|, 1e-8) over
    the sampled coordinates. Requires float64 parameters.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ContractError(f"finite_difference_check: eps {eps} outside [1e-6, 1e-4]")
    for p in params:
        if p.dtype != np.dtype(np.float64):
            raise ContractError("finite_difference_check requires float64 parameters")
        if not p.requires_grad:
            raise ContractError("finite_difference_check: every param must require grad")
        p.zero_grad()

    loss = forward()
    if loss.data.size != 1:
        raise ContractError("finite_difference_check: forward() must return a scalar")
    backprop(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        n = flat.size
        if n <= samples_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_param, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = forward().item()
            flat[i] = orig - eps
            f_minus = forward().item()
            flat[i] = orig
            g_c = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(ga_flat[i] - g_c) / max(abs(ga_flat[i]), abs(g_c), 1e-8)
            worst = max(worst, rel)
    return worst


def global_grad_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return math.sqrt(total)
