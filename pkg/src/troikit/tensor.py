"""Dense tensors with reverse-mode automatic differentiation.

numpy supplies storage and flat arithmetic; every operation here builds
its own backward closure so the analytic gradients stay small enough to
audit against finite differences. Shapes are strict: the only permitted
broadcast is a bias vector over matrix rows (and plain Python scalars).
"""

from __future__ import annotations

import math
import struct
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError, DimensionError

_PRECISIONS = {"f32": np.float32, "f64": np.float64}
_state = {"dtype": np.float32, "grad_enabled": True}


def set_precision(mode: str) -> None:
    """Set the default scalar width ("f32" or "f64") for new tensors."""
    if mode not in _PRECISIONS:
        raise ContractError(f"unknown precision {mode!r}; expected one of {sorted(_PRECISIONS)}")
    _state["dtype"] = _PRECISIONS[mode]


def get_precision() -> str:
    return "f32" if _state["dtype"] is np.float32 else "f64"


@contextmanager
def precision(mode: str):
    """Temporarily switch the default precision (gradient checks run in f64)."""
    old = get_precision()
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(old)


@contextmanager
def no_grad():
    """Skip graph construction inside the block (inference paths)."""
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


class Tensor:
    """N-dimensional array of reals, optionally tracked for gradients.

    Data is immutable by convention once constructed; only ``grad``
    buffers and optimizer updates (which swap in a fresh array) mutate
    state. Forward passes over shared read-only tensors are safe to run
    in parallel; backward and parameter updates are single-writer.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_state["dtype"])
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        tracked = _state["grad_enabled"] and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = parents if tracked else ()
        out._backward = backward if tracked else None
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

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise DimensionError("tensor division is only defined by a scalar")

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate dLoss/dLeaf on every gradient-tracked leaf below ``loss``.

    Calling backward again while leaf gradients are still set is an
    error; call ``zero_grad`` between steps. Silent accumulation hides
    training-loop bugs, so it is rejected outright.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any gradient-tracked tensor")
    order = _toposort(loss)
    stale = sum(
        1 for t in order if t.requires_grad and not t._parents and t.grad is not None
    )
    if stale:
        raise ContractError(
            f"{stale} leaf tensor(s) still hold gradients from a previous backward; "
            "call zero_grad first"
        )
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.shape == b.data.shape:

        def _bw(g):
            _accumulate(a, g)
            _accumulate(b, g)

    elif b.data.ndim == 0 or a.data.ndim == 0:
        # plain scalar shift
        def _bw(g):
            _accumulate(a, g if a.data.ndim else np.asarray(g.sum(), dtype=g.dtype))
            _accumulate(b, g if b.data.ndim else np.asarray(g.sum(), dtype=g.dtype))

    elif a.data.ndim == 2 and b.data.ndim == 1 and b.data.shape[0] == a.data.shape[1]:
        # bias vector over matrix rows, the one permitted broadcast
        def _bw(g):
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))

    else:
        raise DimensionError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")
    return Tensor._result(a.data + b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.shape != b.data.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise DimensionError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def _bw(g):
        ga = g * b.data
        gb = g * a.data
        _accumulate(a, ga if a.data.ndim else np.asarray(ga.sum(), dtype=g.dtype))
        _accumulate(b, gb if b.data.ndim else np.asarray(gb.sum(), dtype=g.dtype))

    return Tensor._result(a.data * b.data, (a, b), _bw)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def _bw(g):
        _accumulate(a, g * c)

    return Tensor._result(a.data * c, (a,), _bw)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # derivative at exactly 0 is defined as 0

    def _bw(g):
        _accumulate(a, g * mask)

    return Tensor._result(np.maximum(a.data, 0), (a,), _bw)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    out = a.data.reshape(shape)

    def _bw(g):
        _accumulate(a, g.reshape(a.data.shape))

    return Tensor._result(out, (a,), _bw)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.data.shape}")

    def _bw(g):
        _accumulate(a, g.T)

    return Tensor._result(a.data.T, (a,), _bw)


def slice_axis0(a: Tensor, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    n = a.data.shape[0] if a.data.ndim else 0
    if not (0 <= start < stop <= n):
        raise DimensionError(f"slice [{start}:{stop}] out of range for axis of length {n}")

    def _bw(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start:stop] += g

    return Tensor._result(a.data[start:stop], (a,), _bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"slice_cols expects a matrix, got shape {a.data.shape}")
    if not (0 <= start < stop <= a.data.shape[1]):
        raise DimensionError(f"column slice [{start}:{stop}] out of range for shape {a.data.shape}")

    def _bw(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[:, start:stop] += g

    return Tensor._result(a.data[:, start:stop], (a,), _bw)


def concat_axis0(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_axis0 needs at least one tensor")
    trailing = parts[0].data.shape[1:]
    for p in parts:
        if p.data.shape[1:] != trailing:
            raise DimensionError(
                f"concat_axis0: trailing dims differ, {p.data.shape} vs {parts[0].data.shape}"
            )
    out = np.concatenate([p.data for p in parts], axis=0)

    def _bw(g):
        offset = 0
        for p in parts:
            n = p.data.shape[0]
            _accumulate(p, g[offset : offset + n])
            offset += n

    return Tensor._result(out, tuple(parts), _bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_cols needs at least one tensor")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise DimensionError(
                f"concat_cols: row counts differ, {p.data.shape} vs {parts[0].data.shape}"
            )
    out = np.concatenate([p.data for p in parts], axis=1)

    def _bw(g):
        offset = 0
        for p in parts:
            n = p.data.shape[1]
            _accumulate(p, g[:, offset : offset + n])
            offset += n

    return Tensor._result(out, tuple(parts), _bw)


# ---------------------------------------------------------------------------
# reductions


def _norm_axes(axis, ndim) -> tuple[int, ...] | None:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def reduce_sum(a: Tensor, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.data.ndim)
    out = a.data.sum(axis=axes)

    def _bw(g):
        if axes is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axes), a.data.shape))

    return Tensor._result(np.asarray(out, dtype=a.data.dtype), (a,), _bw)


def reduce_mean(a: Tensor, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.data.ndim)
    if axes is None:
        count = a.data.size
    else:
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    out = a.data.mean(axis=axes)
    inv = 1.0 / count

    def _bw(g):
        if axes is None:
            _accumulate(a, np.broadcast_to(g * inv, a.data.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g * inv, axes), a.data.shape))

    return Tensor._result(np.asarray(out, dtype=a.data.dtype), (a,), _bw)


def reduce_max(a: Tensor, axis: int) -> Tensor:
    """Max along one axis; on ties the gradient routes to the first maximum."""
    a = _as_tensor(a)
    axis = axis % a.data.ndim
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def _bw(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _accumulate(a, gx)

    return Tensor._result(out, (a,), _bw)


# ---------------------------------------------------------------------------
# linear algebra and normalization


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.data.shape} by {b.data.shape}")
    out = a.data @ b.data

    def _bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return Tensor._result(out, (a, b), _bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return add(y, b) if b is not None else y


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with row-max subtraction for stability."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def _bw(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        _accumulate(x, s * (g - dot))

    return Tensor._result(s, (x,), _bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to zero mean and unit variance, then affine."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma)
    beta = _as_tensor(beta)
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be positive, got {eps}")
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm expects a matrix, got shape {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"layer_norm scale/shift must have shape ({c},), got {gamma.data.shape} and {beta.data.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    out = y * gamma.data + beta.data

    def _bw(g):
        _accumulate(beta, g.sum(axis=0))
        _accumulate(gamma, (g * y).sum(axis=0))
        dy = g * gamma.data
        m1 = dy.mean(axis=1, keepdims=True)
        m2 = (dy * y).mean(axis=1, keepdims=True)
        _accumulate(x, inv * (dy - m1 - y * m2))

    return Tensor._result(out, (x, gamma, beta), _bw)


# ---------------------------------------------------------------------------
# convolution and pooling over (batch, s1, s2, channels) blocks


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution with a square kernel, zero padding, and stride.

    ``x`` is (batch, s1, s2, c_in); ``w`` is (k, k, c_in, c_out). The
    implementation lowers to one matrix product over unrolled patches.
    """
    x = _as_tensor(x)
    w = _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and kernel, got {x.data.shape} and {w.data.shape}")
    bsz, s1, s2, cin = x.data.shape
    k, k2, cin2, cout = w.data.shape
    if k != k2 or cin != cin2:
        raise DimensionError(f"conv2d: kernel {w.data.shape} does not match input {x.data.shape}")
    if b is not None and b.data.shape != (cout,):
        raise DimensionError(f"conv2d bias must have shape ({cout},), got {b.data.shape}")
    o1 = (s1 + 2 * pad - k) // stride + 1
    o2 = (s2 + 2 * pad - k) // stride + 1
    if o1 < 1 or o2 < 1:
        raise DimensionError(f"conv2d: kernel {k} does not fit input {x.data.shape} with pad {pad}")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    cols = np.empty((bsz, o1, o2, k, k, cin), dtype=x.data.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :]
    mat = cols.reshape(bsz * o1 * o2, k * k * cin)
    wmat = w.data.reshape(k * k * cin, cout)
    out = mat @ wmat
    if b is not None:
        out += b.data
    out = out.reshape(bsz, o1, o2, cout)

    def _bw(g):
        gm = g.reshape(bsz * o1 * o2, cout)
        if w.requires_grad:
            _accumulate(w, (mat.T @ gm).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            _accumulate(b, gm.sum(axis=0))
        if x.requires_grad:
            dcols = (gm @ wmat.T).reshape(bsz, o1, o2, k, k, cin)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :] += dcols[
                        :, :, :, i, j, :
                    ]
            _accumulate(x, dxp[:, pad : pad + s1, pad : pad + s2, :] if pad else dxp)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out, parents, _bw)


def _pool_windows(data: np.ndarray, k: int, stride: int):
    bsz, s1, s2, c = data.shape
    o1 = (s1 - k) // stride + 1
    o2 = (s2 - k) // stride + 1
    if o1 < 1 or o2 < 1:
        raise DimensionError(f"pool window {k} does not fit input {data.shape}")
    win = np.empty((bsz, o1, o2, k * k, c), dtype=data.dtype)
    for i in range(k):
        for j in range(k):
            win[:, :, :, i * k + j, :] = data[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :]
    return win, o1, o2


def max_pool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Windowed max over the two spatial axes; first maximum wins ties."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"max_pool2d expects 4-d input, got {x.data.shape}")
    stride = stride or k
    s1, s2 = x.data.shape[1:3]
    o1 = (s1 - k) // stride + 1
    o2 = (s2 - k) // stride + 1
    if o1 < 1 or o2 < 1:
        raise DimensionError(f"pool window {k} does not fit input {x.data.shape}")

    def window(i, j):
        return x.data[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :]

    out = window(0, 0).copy()
    for i in range(k):
        for j in range(k):
            if i or j:
                np.maximum(out, window(i, j), out=out)

    def _bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        live = np.ones(out.shape, dtype=bool)  # first maximum takes the gradient
        for i in range(k):
            for j in range(k):
                hit = (window(i, j) == out) & live
                view = gx[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :]
                view += g * hit
                live &= ~hit
        _accumulate(x, gx)

    return Tensor._result(out, (x,), _bw)


def mean_pool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Windowed mean over the two spatial axes."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"mean_pool2d expects 4-d input, got {x.data.shape}")
    stride = stride or k
    win, o1, o2 = _pool_windows(x.data, k, stride)
    out = win.mean(axis=3)
    inv = 1.0 / (k * k)

    def _bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        gshare = g * inv
        for i in range(k):
            for j in range(k):
                view = gx[:, i : i + stride * o1 : stride, j : j + stride * o2 : stride, :]
                view += gshare
        _accumulate(x, gx)

    return Tensor._result(out, (x,), _bw)


# ---------------------------------------------------------------------------
# classification loss


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Negative log-softmax at the true label, averaged over rows.

    Accepts a (K,) vector with a single int label or a (B, K) matrix
    with a sequence of labels.
    """
    logits = _as_tensor(logits)
    single = logits.data.ndim == 1
    z = logits.data[None, :] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"cross_entropy expects logits of rank 1 or 2, got {logits.data.shape}")
    lab = np.asarray([labels] if single else list(labels), dtype=np.int64)
    bsz, k = z.shape
    if lab.shape != (bsz,):
        raise DimensionError(f"cross_entropy: {bsz} logit rows but {lab.shape[0]} labels")
    if (lab < 0).any() or (lab >= k).any():
        raise ContractError(f"label out of range [0, {k})")
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    losses = lse - z[np.arange(bsz), lab]
    out = np.asarray(losses.mean(), dtype=z.dtype)

    def _bw(g):
        p = np.exp(z - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(bsz), lab] -= 1.0
        gz = p * (g / bsz)
        _accumulate(logits, gz[0] if single else gz)

    return Tensor._result(out, (logits,), _bw)


# ---------------------------------------------------------------------------
# initialization and serialization


def init_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Uniform init with bound 1/sqrt(fan_in); the draw is always made in
    float64 so parameter values agree across precision modes."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_relu_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Uniform init with bound sqrt(6/fan_in), which keeps activation
    variance roughly constant through ReLU stages."""
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def write_tensor(fh, tensor) -> None:
    """u32 rank, u32 extents, then row-major little-endian float32 payload."""
    arr = np.ascontiguousarray(tensor.data if isinstance(tensor, Tensor) else tensor)
    fh.write(struct.pack("<I", arr.ndim))
    if arr.ndim:
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_tensor(fh) -> np.ndarray:
    """Inverse of write_tensor; returns a float32 array."""
    head = fh.read(4)
    if len(head) != 4:
        raise DataError("truncated tensor header")
    (rank,) = struct.unpack("<I", head)
    if rank:
        raw_dims = fh.read(4 * rank)
        if len(raw_dims) != 4 * rank:
            raise DataError("truncated tensor extents")
        dims = struct.unpack(f"<{rank}I", raw_dims)
    else:
        dims = ()
    count = 1
    for d in dims:
        count *= d
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise DataError("truncated tensor payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
