"""Differentiable operations over NCHW tensors.

Every op computes its forward pass with numpy and hands a backward closure
to :func:`make_output`, which records it on the active tape. Per-channel
parameters (biases, norm scale/shift) are stored as ``(1, C, 1, 1)`` tensors
and broadcast over ``(N, C, H, W)``.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from ..core.errors import ShapeError
from .tensor import Tensor, make_output


logger = logging.getLogger(__name__)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pair(value: int | Sequence[int]) -> tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    first, second = value
    return int(first), int(second)


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]


def _col2im(dcols: np.ndarray, padded_shape: tuple[int, ...], sh: int, sw: int) -> np.ndarray:
    _, _, ho, wo, kh, kw = dcols.shape
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += dcols[..., i, j]
    return dxp


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        out = np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from exc
    for shape in (a.shape, b.shape):
        if shape != out and shape[2:] != (1, 1):
            raise ShapeError(f"{op}: only (N, C, 1, 1) broadcasting is supported, got {a.shape} and {b.shape}")
    return out


# --- convolution -----------------------------------------------------------


def _conv_forward(cols: np.ndarray, weight: np.ndarray, groups: int) -> np.ndarray:
    n, cin, ho, wo, kh, kw = cols.shape
    cout = weight.shape[0]
    if groups == cin:
        mult = cout // cin
        out = np.einsum("nchwij,cmij->ncmhw", cols, weight.reshape(cin, mult, kh, kw), optimize=True)
        return out.reshape(n, cout, ho, wo)
    cg, og = cin // groups, cout // groups
    out = np.empty((n, cout, ho, wo), dtype=cols.dtype)
    for gi in range(groups):
        block = np.tensordot(cols[:, gi * cg : (gi + 1) * cg], weight[gi * og : (gi + 1) * og], axes=([1, 4, 5], [1, 2, 3]))
        out[:, gi * og : (gi + 1) * og] = block.transpose(0, 3, 1, 2)
    return out


def _conv_grad_input(grad: np.ndarray, weight: np.ndarray, groups: int) -> np.ndarray:
    n, cout, ho, wo = grad.shape
    _, cg, kh, kw = weight.shape
    cin = cg * groups
    if groups == cin:
        mult = cout // cin
        return np.einsum(
            "ncmhw,cmij->nchwij",
            grad.reshape(n, cin, mult, ho, wo),
            weight.reshape(cin, mult, kh, kw),
            optimize=True,
        )
    og = cout // groups
    dcols = np.empty((n, cin, ho, wo, kh, kw), dtype=grad.dtype)
    for gi in range(groups):
        block = np.tensordot(grad[:, gi * og : (gi + 1) * og], weight[gi * og : (gi + 1) * og], axes=([1], [0]))
        dcols[:, gi * cg : (gi + 1) * cg] = block.transpose(0, 3, 1, 2, 4, 5)
    return dcols


def _conv_grad_weight(grad: np.ndarray, cols: np.ndarray, groups: int) -> np.ndarray:
    n, cout, ho, wo = grad.shape
    _, cin, _, _, kh, kw = cols.shape
    if groups == cin:
        mult = cout // cin
        dw = np.einsum("ncmhw,nchwij->cmij", grad.reshape(n, cin, mult, ho, wo), cols, optimize=True)
        return dw.reshape(cout, 1, kh, kw)
    cg, og = cin // groups, cout // groups
    dw = np.empty((cout, cg, kh, kw), dtype=grad.dtype)
    for gi in range(groups):
        dw[gi * og : (gi + 1) * og] = np.tensordot(
            grad[:, gi * og : (gi + 1) * og], cols[:, gi * cg : (gi + 1) * cg], axes=([0, 2, 3], [0, 2, 3])
        )
    return dw


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int | Sequence[int] = 1,
    padding: int | Sequence[int] = 0,
    groups: int = 1,
) -> Tensor:
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeError(f"conv2d: groups={groups} must divide in_channels={cin} and out_channels={cout}")
    if cin_g != cin // groups:
        raise ShapeError(f"conv2d: weight {weight.shape} expects {cin_g * groups} input channels, got {cin}")
    if bias is not None and bias.shape != (1, cout, 1, 1):
        raise ShapeError(f"conv2d: bias must have shape (1, {cout}, 1, 1), got {bias.shape}")

    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = _windows(xp, kh, kw, sh, sw, ho, wo)
    out = _conv_forward(cols, weight.data, groups)
    if bias is not None:
        out = out + bias.data

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        dx = dw = db = None
        if x.requires_grad:
            dcols = _conv_grad_input(grad, weight.data, groups)
            dx = _col2im(dcols, xp.shape, sh, sw)[:, :, ph : ph + h, pw : pw + w]
        if weight.requires_grad:
            dw = _conv_grad_weight(grad, cols, groups)
        if bias is not None and bias.requires_grad:
            db = grad.sum(axis=(0, 2, 3), keepdims=True)
        return (dx, dw, db)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_output("conv2d", out, inputs, backward_fn)


def depthwise_separable(
    x: Tensor,
    dw_weight: Tensor,
    pw_weight: Tensor,
    biases: tuple[Tensor | None, Tensor | None] = (None, None),
) -> Tensor:
    """Per-channel k×k conv (same padding) followed by a 1×1 projection."""
    channels = x.shape[1]
    kernel = dw_weight.shape[2]
    dw_bias, pw_bias = biases
    hidden = conv2d(x, dw_weight, dw_bias, padding=kernel // 2, groups=channels)
    return conv2d(hidden, pw_weight, pw_bias)


# --- normalisation and activations ----------------------------------------


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    channels = x.shape[1]
    if gamma.shape != (1, channels, 1, 1) or beta.shape != (1, channels, 1, 1):
        raise ShapeError(f"instance_norm: gamma/beta must be (1, {channels}, 1, 1), got {gamma.shape}/{beta.shape}")

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = gamma.data * xhat + beta.data

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        dx = None
        if x.requires_grad:
            dxhat = grad * gamma.data
            dx = inv_std * (
                dxhat
                - dxhat.mean(axis=(2, 3), keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
            )
        dgamma = (grad * xhat).sum(axis=(0, 2, 3), keepdims=True) if gamma.requires_grad else None
        dbeta = grad.sum(axis=(0, 2, 3), keepdims=True) if beta.requires_grad else None
        return (dx, dgamma, dbeta)

    return make_output("instance_norm", out, (x, gamma, beta), backward_fn)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (grad * (cdf + x.data * pdf),)

    return make_output("gelu", out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * out * (1.0 - out),)

    return make_output("sigmoid", out, (x,), backward_fn)


# --- resampling -----------------------------------------------------------


def _interp_matrix(size: int, factor: int, dtype: np.dtype) -> np.ndarray:
    # half-pixel centres (align_corners=False), source index clamped at the borders
    dst = np.arange(size * factor, dtype=np.float64)
    src = np.maximum((dst + 0.5) / factor - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), size - 1)
    i1 = np.minimum(i0 + 1, size - 1)
    lam = src - i0
    rows = np.arange(size * factor)
    mat = np.zeros((size * factor, size), dtype=np.float64)
    np.add.at(mat, (rows, i0), 1.0 - lam)
    np.add.at(mat, (rows, i1), lam)
    return mat.astype(dtype)


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ShapeError(f"bilinear_upsample: factor must be >= 1, got {factor}")
    _, _, h, w = x.shape
    ah = _interp_matrix(h, factor, x.data.dtype)
    aw = _interp_matrix(w, factor, x.data.dtype)
    out = np.einsum("ph,nchw,qw->ncpq", ah, x.data, aw, optimize=True)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.einsum("ph,ncpq,qw->nchw", ah, grad, aw, optimize=True),)

    return make_output("bilinear_upsample", out, (x,), backward_fn)


def _shuffle(data: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = data.shape
    out_c = c // (r * r)
    return data.reshape(n, out_c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, out_c, h * r, w * r)


def _unshuffle(data: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = data.shape
    return data.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    if r < 1 or x.shape[1] % (r * r):
        raise ShapeError(f"pixel_shuffle: channels {x.shape[1]} not divisible by r^2={r * r}")
    out = np.ascontiguousarray(_shuffle(x.data, r))

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.ascontiguousarray(_unshuffle(grad, r)),)

    return make_output("pixel_shuffle", out, (x,), backward_fn)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    _, _, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise ShapeError(f"pixel_unshuffle: spatial size {h}x{w} not divisible by r={r}")
    out = np.ascontiguousarray(_unshuffle(x.data, r))

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.ascontiguousarray(_shuffle(grad, r)),)

    return make_output("pixel_unshuffle", out, (x,), backward_fn)


def _shift(data: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(data)
    h, w = data.shape[2:]
    if abs(dx) >= w or abs(dy) >= h:
        return out
    out[:, :, max(0, dy) : h + min(0, dy), max(0, dx) : w + min(0, dx)] = data[
        :, :, max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)
    ]
    return out


def spatial_shift(x: Tensor, dx: int, dy: int) -> Tensor:
    """out(h, w) = x(h - dy, w - dx); vacated pixels are zero."""
    out = _shift(x.data, int(dx), int(dy))

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (_shift(grad, -int(dx), -int(dy)),)

    return make_output("spatial_shift", out, (x,), backward_fn)


# --- pooling --------------------------------------------------------------


def global_avg_pool(x: Tensor) -> Tensor:
    _, _, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(grad / (h * w), x.shape).copy(),)

    return make_output("global_avg_pool", out, (x,), backward_fn)


def max_pool2d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h < kernel or w < kernel:
        raise ShapeError(f"max_pool2d: input {h}x{w} smaller than kernel {kernel}")
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    flat = _windows(x.data, kernel, kernel, stride, stride, ho, wo).reshape(n, c, ho, wo, kernel * kernel)
    # argmax returns the first maximal element in row-major window order
    idx = flat.argmax(axis=-1)[..., None]
    out = np.take_along_axis(flat, idx, axis=-1)[..., 0]

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        dflat = np.zeros((n, c, ho, wo, kernel * kernel), dtype=grad.dtype)
        np.put_along_axis(dflat, idx, grad[..., None], axis=-1)
        return (_col2im(dflat.reshape(n, c, ho, wo, kernel, kernel), x.shape, stride, stride),)

    return make_output("max_pool2d", out, (x,), backward_fn)


# --- channel plumbing -----------------------------------------------------


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise ShapeError("concat_channels: need at least one tensor")
    n, _, h, w = inputs[0].shape
    for t in inputs:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: mismatched shapes {[t.shape for t in inputs]}")
    out = np.concatenate([t.data for t in inputs], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])

    def backward_fn(grad: np.ndarray) -> list[np.ndarray]:
        return [grad[:, bounds[i] : bounds[i + 1]] for i in range(len(inputs))]

    return make_output("concat_channels", out, tuple(inputs), backward_fn)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"channel_slice: invalid range [{start}, {stop}) for {x.shape[1]} channels")
    out = x.data[:, start:stop].copy()

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[:, start:stop] = grad
        return (full,)

    return make_output("channel_slice", out, (x,), backward_fn)


def split_channels(x: Tensor, parts: int) -> list[Tensor]:
    channels = x.shape[1]
    if parts < 1 or channels % parts:
        raise ShapeError(f"split_channels: {channels} channels cannot be split into {parts} equal parts")
    size = channels // parts
    return [channel_slice(x, i * size, (i + 1) * size) for i in range(parts)]


def crop_spatial(x: Tensor, height: int, width: int) -> Tensor:
    if height > x.shape[2] or width > x.shape[3]:
        raise ShapeError(f"crop_spatial: cannot crop {x.shape} to {height}x{width}")
    out = x.data[:, :, :height, :width].copy()

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[:, :, :height, :width] = grad
        return (full,)

    return make_output("crop_spatial", out, (x,), backward_fn)


# --- elementwise ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    out = a.data + b.data

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (_unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape))

    return make_output("add", out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    out = a.data * b.data

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (_unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape))

    return make_output("mul", out, (a, b), backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.data.dtype.type(factor)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * grad.dtype.type(factor),)

    return make_output("scale", out, (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out = x.data.sum().reshape(1, 1, 1, 1)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(grad.reshape(()), x.shape).copy(),)

    return make_output("sum_all", out, (x,), backward_fn)


def clamp(x: Tensor, low: float = 0.0, high: float = 1.0) -> Tensor:
    out = np.clip(x.data, low, high)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray]:
        inside = (x.data >= low) & (x.data <= high)
        return (grad * inside,)

    return make_output("clamp", out, (x,), backward_fn)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    count = diff.size
    out = np.abs(diff).mean().reshape(1, 1, 1, 1)

    def backward_fn(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # np.sign(0) == 0, so exact ties contribute no gradient
        g = np.sign(diff) * (grad.reshape(()) / count)
        return (g, -g)

    return make_output("l1_loss", out, (pred, target), backward_fn)
