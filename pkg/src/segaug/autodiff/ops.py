"""Differentiable primitives.

Each primitive computes its forward value with numpy and registers a backward
rule in :data:`BACKWARD` under its op name. A rule receives the saved context,
the upstream gradient and the parent tensors, and returns one gradient (or
``None``) per parent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import _kernels
from .tensor import DimensionError, NumericError, Tensor, as_tensor, get_default_dtype, record

BACKWARD: dict = {}


def _rule(name):
    def deco(fn):
        BACKWARD[name] = fn
        return fn

    return deco


def _const(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op}: non-finite values in output")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic -------------------------------------------------


def add(a, b) -> Tensor:
    a = _const(a, b if isinstance(b, Tensor) else None)
    b = _const(b, a)
    return record(a.data + b.data, (a, b), "add")


@_rule("add")
def _add_bw(ctx, g, parents):
    a, b = parents
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a, b) -> Tensor:
    a = _const(a, b if isinstance(b, Tensor) else None)
    b = _const(b, a)
    return record(a.data - b.data, (a, b), "sub")


@_rule("sub")
def _sub_bw(ctx, g, parents):
    a, b = parents
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a, b) -> Tensor:
    a = _const(a, b if isinstance(b, Tensor) else None)
    b = _const(b, a)
    return record(a.data * b.data, (a, b), "mul")


@_rule("mul")
def _mul_bw(ctx, g, parents):
    a, b = parents
    ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
    return ga, gb


def scale(a: Tensor, s: float) -> Tensor:
    return record(a.data * a.data.dtype.type(s), (a,), "scale", s)


@_rule("scale")
def _scale_bw(s, g, parents):
    return (g * g.dtype.type(s),)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a.data @ b.data
    _check_finite(out, "matmul")
    return record(out, (a, b), "matmul")


@_rule("matmul")
def _matmul_bw(ctx, g, parents):
    a, b = parents
    ga = g @ b.data.T if a.requires_grad else None
    gb = a.data.T @ g if b.requires_grad else None
    return ga, gb


# -- shape manipulation -----------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return record(a.data.reshape(shape), (a,), "reshape", a.shape)


@_rule("reshape")
def _reshape_bw(shape, g, parents):
    return (g.reshape(shape),)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    return record(a.data.transpose(axes), (a,), "transpose", axes)


@_rule("transpose")
def _transpose_bw(axes, g, parents):
    return (g.transpose(np.argsort(axes)),)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)):
            raise DimensionError(f"concat: shapes {[x.shape for x in tensors]} disagree off axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    return record(out, tuple(tensors), "concat", (axis, sizes))


@_rule("concat")
def _concat_bw(ctx, g, parents):
    axis, sizes = ctx
    return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


# -- pointwise nonlinearities -----------------------------------------------


def relu(a: Tensor) -> Tensor:
    return record(np.maximum(a.data, 0), (a,), "relu")


@_rule("relu")
def _relu_bw(ctx, g, parents):
    (a,) = parents
    return (g * (a.data > 0),)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    return record(np.where(x > 0, x, x * x.dtype.type(slope)), (a,), "leaky_relu", slope)


@_rule("leaky_relu")
def _leaky_relu_bw(slope, g, parents):
    (a,) = parents
    return (np.where(a.data > 0, g, g * g.dtype.type(slope)),)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return record(out, (a,), "tanh", out)


@_rule("tanh")
def _tanh_bw(out, g, parents):
    return (g * (1 - out * out),)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return record(out, (a,), "sigmoid", out)


@_rule("sigmoid")
def _sigmoid_bw(out, g, parents):
    return (g * out * (1 - out),)


def softmax(a: Tensor, axis: int = 1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)
    return record(out, (a,), "softmax", (out, axis))


@_rule("softmax")
def _softmax_bw(ctx, g, parents):
    out, axis = ctx
    return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    _check_finite(out, "log")
    return record(out, (a,), "log")


@_rule("log")
def _log_bw(ctx, g, parents):
    (a,) = parents
    return (g / a.data,)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    _check_finite(out, "exp")
    return record(out, (a,), "exp", out)


@_rule("exp")
def _exp_bw(out, g, parents):
    return (g * out,)


# -- reductions ---------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    return record(a.data.sum(axis=axes, keepdims=keepdims), (a,), "sum", (axes, keepdims, a.shape))


@_rule("sum")
def _sum_bw(ctx, g, parents):
    axes, keepdims, shape = ctx
    if not keepdims:
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g, shape).copy(),)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return record(a.data.mean(axis=axes, keepdims=keepdims), (a,), "mean", (axes, keepdims, a.shape, count))


@_rule("mean")
def _mean_bw(ctx, g, parents):
    axes, keepdims, shape, count = ctx
    if not keepdims:
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g / g.dtype.type(count), shape).copy(),)


# -- spatial ----------------------------------------------------------------


def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of an NCHW input with OIHW weights."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected NCHW input and OIHW weight, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if c != ci:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {ci}")
    if stride < 1 or padding < 0:
        raise DimensionError("conv2d: stride must be positive and padding non-negative")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h}x{wd} (pad {padding})")
    ho = conv_out_size(h, kh, stride, padding)
    wo = conv_out_size(wd, kw, stride, padding)
    xd = x.data
    if xd.dtype != w.data.dtype:
        xd = xd.astype(w.data.dtype)
    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        cols = xd.transpose(1, 0, 2, 3).reshape(c, n * h * wd)
        pshape = xd.shape
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
        pshape = xp.shape
        cols = _kernels.im2col(xp, kh, kw, stride, ho, wo)
    w2 = w.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    if b is not None:
        out += b.data.reshape(1, o, 1, 1)
    _check_finite(out, "conv2d")
    parents = (x, w) if b is None else (x, w, b)
    ctx = (cols if w.requires_grad else None, pshape, kh, kw, stride, padding, ho, wo)
    return record(out, parents, "conv2d", ctx)


@_rule("conv2d")
def _conv2d_bw(ctx, g, parents):
    cols, pshape, kh, kw, stride, padding, ho, wo = ctx
    x, w = parents[0], parents[1]
    o = w.shape[0]
    gm = g.transpose(1, 0, 2, 3).reshape(o, -1)
    gw = (gm @ cols.T).reshape(w.shape) if w.requires_grad else None
    gx = None
    if x.requires_grad:
        dcols = w.data.reshape(o, -1).T @ gm
        if kh == 1 and kw == 1 and stride == 1 and padding == 0:
            n, c, h, wd = pshape
            gx = np.ascontiguousarray(dcols.reshape(c, n, h, wd).transpose(1, 0, 2, 3))
        else:
            gxp = _kernels.col2im(dcols, pshape, kh, kw, stride, ho, wo)
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            gx = np.ascontiguousarray(gxp)
    out = (gx, gw)
    if len(parents) == 3:
        out = out + ((gm.sum(axis=1) if parents[2].requires_grad else None),)
    return out


def avg_pool2d(x: Tensor, window: int, stride: int) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2d: expected NCHW, got {x.shape}")
    n, c, h, w = x.shape
    if window < 1 or stride < 1:
        raise DimensionError("avg_pool2d: window and stride must be positive")
    if window > h or window > w:
        raise DimensionError(f"avg_pool2d: window {window} larger than spatial extent {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    if window == stride and h % window == 0 and w % window == 0:
        out = x.data.reshape(n, c, ho, window, wo, window).mean(axis=(3, 5))
    else:
        win = np.lib.stride_tricks.sliding_window_view(x.data, (window, window), axis=(2, 3))
        out = win[:, :, ::stride, ::stride].mean(axis=(4, 5))
    return record(np.ascontiguousarray(out), (x,), "avg_pool2d", (window, stride, ho, wo))


@_rule("avg_pool2d")
def _avg_pool2d_bw(ctx, g, parents):
    window, stride, ho, wo = ctx
    (x,) = parents
    gs = g / g.dtype.type(window * window)
    n, c, h, w = x.shape
    if window == stride and h % window == 0 and w % window == 0:
        gx = np.broadcast_to(gs[:, :, :, None, :, None], (n, c, ho, window, wo, window)).reshape(n, c, h, w)
        return (gx.copy(),)
    gx = np.zeros(x.shape, dtype=g.dtype)
    for i in range(window):
        for j in range(window):
            gx[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += gs
    return (gx,)


def upsample_nearest2x(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"upsample_nearest2x: expected NCHW, got {x.shape}")
    n, c, h, w = x.shape
    out = np.broadcast_to(x.data[:, :, :, None, :, None], (n, c, h, 2, w, 2)).reshape(n, c, 2 * h, 2 * w)
    return record(out, (x,), "upsample_nearest2x")


@_rule("upsample_nearest2x")
def _upsample_bw(ctx, g, parents):
    n, c, h2, w2 = g.shape
    return (g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    k = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= k):
        from .tensor import DomainError

        raise DomainError(f"embedding: ids must lie in [0, {k}), got {ids.tolist()}")
    return record(table.data[ids], (table,), "embedding", ids)


@_rule("embedding")
def _embedding_bw(ids, g, parents):
    (table,) = parents
    gt = np.zeros(table.shape, dtype=g.dtype)
    np.add.at(gt, ids, g)
    return (gt,)


# -- small compositions -------------------------------------------------------


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return add(relu(a), relu(scale(a, -1.0)))


def reciprocal(a: Tensor) -> Tensor:
    """1/a for strictly positive a."""
    return exp(scale(log(a), -1.0))


def sqrt(a: Tensor) -> Tensor:
    """Square root for strictly positive a."""
    return exp(scale(log(a), 0.5))


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice ``start:stop`` along ``axis``."""
    axis = axis % a.ndim
    if not 0 <= start < stop <= a.shape[axis]:
        raise DimensionError(f"narrow: [{start}, {stop}) outside axis of length {a.shape[axis]}")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, stop)
    return record(np.ascontiguousarray(a.data[tuple(sl)]), (a,), "narrow", tuple(sl))


@_rule("narrow")
def _narrow_bw(sl, g, parents):
    (a,) = parents
    ga = np.zeros(a.shape, dtype=g.dtype)
    ga[sl] = g
    return (ga,)
