"""Forward operators and their reverse-mode gradients.

All operators are deterministic: reductions use fixed numpy/BLAS evaluation
order, max-style operators break ties toward the lowest linear index, so a
repeated run reproduces results bit for bit.

Convolution output size uses floor division,
``H' = (H + 2p - k) // s + 1``; trailing rows/columns that do not fit a full
window are ignored and receive zero gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor

__all__ = [
    "add",
    "sub",
    "mul",
    "scale",
    "eltwise_max",
    "relu",
    "sigmoid",
    "log",
    "clip",
    "absolute",
    "tsum",
    "tmean",
    "reshape",
    "concat",
    "conv2d",
    "linear",
    "batchnorm_train",
    "batchnorm_eval",
    "maxpool2d",
    "upsample_nearest",
    "global_avg_pool",
    "global_max_pool",
    "channel_mean_map",
    "channel_max_map",
    "conv2d_output_size",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcastable(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# -- elementwise ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "add")
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "sub")
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "mul")
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(out, (a, b), vjp)


def scale(x: Tensor, s: float) -> Tensor:
    out = x.data * x.data.dtype.type(s)

    def vjp(g):
        return (g * x.data.dtype.type(s),)

    return Tensor.from_op(out, (x,), vjp)


def eltwise_max(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise maximum; ties route the gradient to the first argument."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"eltwise_max: shapes {a.shape} != {b.shape}")
    out = np.maximum(a.data, b.data)

    def vjp(g):
        take_a = a.data >= b.data
        return g * take_a, g * ~take_a

    return Tensor.from_op(out, (a, b), vjp)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def vjp(g):
        return (g * (x.data > 0),)

    return Tensor.from_op(out, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic; outputs stay strictly inside (0, 1)
    even where the float type would round to the endpoints."""
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    one = d.dtype.type(1)
    zero = d.dtype.type(0)
    np.clip(out, np.nextafter(zero, one), np.nextafter(one, zero), out=out)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Tensor.from_op(out, (x,), vjp)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return Tensor.from_op(out, (x,), vjp)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only strictly inside the interval."""
    out = np.clip(x.data, lo, hi)

    def vjp(g):
        return (g * ((x.data > lo) & (x.data < hi)),)

    return Tensor.from_op(out, (x,), vjp)


def absolute(x: Tensor) -> Tensor:
    out = np.abs(x.data)

    def vjp(g):
        return (g * np.sign(x.data),)

    return Tensor.from_op(out, (x,), vjp)


# -- reductions ----------------------------------------------------------------


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def vjp(g):
        return (np.broadcast_to(g, x.shape),)

    return Tensor.from_op(out, (x,), vjp)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.sum() / n, dtype=x.dtype)

    def vjp(g):
        return (np.broadcast_to(g / n, x.shape),)

    return Tensor.from_op(out, (x,), vjp)


# -- structure -----------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return Tensor.from_op(out, (x,), vjp)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    base = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(base) or any(
            i != axis and t.shape[i] != base[i] for i in range(len(base))
        ):
            raise ShapeMismatch(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return Tensor.from_op(out, tuple(tensors), vjp)


# -- convolution and linear ------------------------------------------------------


def conv2d_output_size(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if out <= 0:
        raise ShapeMismatch(f"conv2d: window {k} exceeds padded input {size + 2 * pad}")
    return out


def _im2col_nhwc(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Patch matrix (N*Ho*Wo, kh*kw*C) from padded NHWC input.

    Channels-last keeps every gathered run contiguous, which is what makes
    the copy (and the whole convolution) fast.
    """
    n, _, _, c = xp.shape
    sn, sh, sw, sc = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return np.ascontiguousarray(win).reshape(n * ho * wo, kh * kw * c)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """2D cross-correlation, zero padding, floor output size.

    Public layout is NCHW; internally the patch matrices are built
    channels-last.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch("conv2d: expects NCHW input and OIHW weight")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ShapeMismatch(f"conv2d: input channels {cin} != weight channels {cin_w}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeMismatch(f"conv2d: bias shape {bias.shape} != ({cout},)")
    ho = conv2d_output_size(h, kh, stride, pad)
    wo = conv2d_output_size(w, kw, stride, pad)

    xt = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))
    if pad:
        xt = np.pad(xt, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    if kh == 1 and kw == 1 and stride == 1:
        col = xt.reshape(n * ho * wo, cin)
    else:
        col = _im2col_nhwc(xt, kh, kw, stride, ho, wo)
    # (kh*kw*Cin, Cout) so that col @ wmat needs no BLAS-side transpose
    wmat = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0)).reshape(kh * kw * cin, cout)
    out_mat = col @ wmat
    if bias is not None:
        out_mat += bias.data
    out = np.ascontiguousarray(out_mat.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    hp, wp = h + 2 * pad, w + 2 * pad

    def vjp(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        dw = np.ascontiguousarray((col.T @ gmat).reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1))
        dx = None
        if x.requires_grad:
            if kh == 1 and kw == 1 and stride == 1:
                dxt = (gmat @ wmat.T).reshape(n, ho, wo, cin)
                if pad:
                    dxt = dxt[:, pad : pad + h, pad : pad + w]
            else:
                # one small matmul per kernel position keeps both the matmul
                # output and the scatter-add destination contiguous per row
                dxp = np.zeros((n, hp, wp, cin), dtype=g.dtype)
                for i in range(kh):
                    hi = i + stride * ho
                    for j in range(kw):
                        w_ij = wmat[(i * kw + j) * cin : (i * kw + j + 1) * cin]
                        dcol_ij = (gmat @ w_ij.T).reshape(n, ho, wo, cin)
                        dxp[:, i:hi:stride, j : j + stride * wo : stride] += dcol_ij
                dxt = dxp[:, pad : pad + h, pad : pad + w] if pad else dxp
            dx = np.ascontiguousarray(dxt.transpose(0, 3, 1, 2))
        if bias is not None:
            return dx, dw, gmat.sum(axis=0)
        return dx, dw

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, vjp)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"linear: {x.shape} x {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def vjp(g):
        dx = g @ weight.data
        dw = g.T @ x.data
        if bias is not None:
            return dx, dw, g.sum(axis=0)
        return dx, dw

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, vjp)


# -- batch normalization ----------------------------------------------------------


def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Batch statistics path. Returns (out, batch_mean, batch_var_biased).

    Forward and backward reduce per channel via contiguous inner-axis sums
    and apply only per-channel affine passes over the activation, which keeps
    this cheap relative to the convolutions around it.
    """
    if x.ndim != 4:
        raise ShapeMismatch("batchnorm: expects NCHW")
    d = x.data
    n, c, h, w = d.shape
    m = n * h * w
    flat = d.reshape(n, c, h * w)
    mu = flat.sum(axis=(0, 2)) / m
    var = np.maximum(np.einsum("ncl,ncl->c", flat, flat) / m - mu * mu, 0.0)
    invstd = 1.0 / np.sqrt(var + eps)
    a = gamma.data * invstd
    out = d * a[None, :, None, None]
    out += (beta.data - mu * a)[None, :, None, None]

    def vjp(g):
        gf = g.reshape(n, c, h * w)
        s1 = gf.sum(axis=(0, 2))
        s2 = np.einsum("ncl,ncl->c", gf, flat)
        dbeta = s1
        dgamma = invstd * (s2 - mu * s1)
        p_c = gamma.data * invstd
        r_c = -(invstd * invstd) * gamma.data * dgamma / m
        s_c = -p_c * (s1 / m) - mu * r_c
        dx = g * p_c[None, :, None, None]
        dx += d * r_c[None, :, None, None]
        dx += s_c[None, :, None, None]
        return dx, dgamma, dbeta

    return Tensor.from_op(out, (x, gamma, beta), vjp), mu, var


def batchnorm_eval(
    x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
    eps: float = 1e-5,
) -> Tensor:
    """Running statistics path: a fixed per-channel affine map."""
    if x.ndim != 4:
        raise ShapeMismatch("batchnorm: expects NCHW")
    invstd = 1.0 / np.sqrt(running_var + eps)
    scale_c = (gamma.data * invstd)[None, :, None, None]
    shift = (beta.data - gamma.data * running_mean * invstd)[None, :, None, None]
    out = x.data * scale_c + shift

    def vjp(g):
        dx = g * scale_c
        xhat = (x.data - running_mean[None, :, None, None]) * invstd[None, :, None, None]
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        return dx, dgamma, dbeta

    return Tensor.from_op(out, (x, gamma, beta), vjp)


# -- pooling / resampling ----------------------------------------------------------


def maxpool2d(x: Tensor, k: int) -> Tensor:
    """Window max with kernel == stride == k.

    Gradient routes to the window argmax; ties take the lowest linear index.
    """
    if x.ndim != 4:
        raise ShapeMismatch("maxpool2d: expects NCHW")
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeMismatch(f"maxpool2d: spatial dims {(h, w)} not divisible by {k}")
    ho, wo = h // k, w // k
    blocks = x.data.reshape(n, c, ho, k, wo, k)
    out = blocks.max(axis=(3, 5))

    def vjp(g):
        win = np.ascontiguousarray(blocks.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, ho, wo, k * k)
        arg = win.argmax(axis=-1)
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, arg[..., None], g[..., None], axis=-1)
        dx = dwin.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(x.shape)
        return (np.ascontiguousarray(dx),)

    return Tensor.from_op(out, (x,), vjp)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch("upsample_nearest: expects NCHW")
    n, c, h, w = x.shape
    f = int(factor)
    out = np.broadcast_to(
        x.data[:, :, :, None, :, None], (n, c, h, f, w, f)
    ).reshape(n, c, h * f, w * f)
    out = np.ascontiguousarray(out)

    def vjp(g):
        return (g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), vjp)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch("global_avg_pool: expects NCHW")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def vjp(g):
        return (np.broadcast_to(g / (h * w), x.shape),)

    return Tensor.from_op(out, (x,), vjp)


def global_max_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch("global_max_pool: expects NCHW")
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1).reshape(n, c, 1, 1)

    def vjp(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], g.reshape(n, c, 1), axis=-1)
        return (dflat.reshape(x.shape),)

    return Tensor.from_op(out, (x,), vjp)


def channel_mean_map(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch("channel_mean_map: expects NCHW")
    c = x.shape[1]
    out = x.data.mean(axis=1, keepdims=True)

    def vjp(g):
        return (np.broadcast_to(g / c, x.shape),)

    return Tensor.from_op(out, (x,), vjp)


def channel_max_map(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch("channel_max_map: expects NCHW")
    arg = x.data.argmax(axis=1, keepdims=True)
    out = np.take_along_axis(x.data, arg, axis=1)

    def vjp(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, arg, g, axis=1)
        return (dx,)

    return Tensor.from_op(out, (x,), vjp)
