"""Rank-4 tensor primitives with explicit backward passes.

Every array is laid out (n, c, h, w): batch, channel, height, width.
Forward functions are pure and never mutate their inputs.  Operations
that participate in training come in pairs: ``op_forward`` returns
``(out, cache)`` and ``op_backward(grad_out, cache)`` returns the input
gradients.  Production tensors are float32; the functions themselves are
dtype-polymorphic so gradient checks can run the same code in float64.

Reductions (means, variances, gradient sums) accumulate in float64 and
cast back to the input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """An operand's dimensions violate the operation's contract."""


def require_tensor4(x, name: str = "tensor") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 (n, c, h, w), got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvParams:
    """One convolution layer: weight (c_out, c_in, k_h, k_w), bias (c_out,).

    padding "valid" shrinks each spatial axis by (k - 1); "same" preserves
    it (stride 1 only).
    """

    weight: np.ndarray
    bias: np.ndarray
    padding: str = "valid"
    stride: int = 1

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        self.bias = np.asarray(self.bias)
        if self.weight.ndim != 4:
            raise ShapeError(
                f"conv weight must be rank-4 (c_out, c_in, k_h, k_w), got {self.weight.shape}"
            )
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"conv bias must have shape ({self.weight.shape[0]},), got {self.bias.shape}"
            )
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if not isinstance(self.stride, int) or self.stride < 1:
            raise ValueError(f"stride must be a positive integer, got {self.stride!r}")
        if self.padding == "same" and self.stride != 1:
            raise ValueError("'same' padding is only defined for stride 1")

    @property
    def kernel_hw(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


def _conv_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (n, c, oh, ow, kh, kw) view, no copy
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    if stride != 1:
        win = win[:, :, ::stride, ::stride]
    return win


def _pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh - 1, kw - 1
    return np.pad(x, ((0, 0), (0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)))


def conv2d_forward(x: np.ndarray, p: ConvParams):
    """Cross-correlation of x with p.weight plus p.bias.

    out[n, o, i, j] = b[o] + sum_{c,u,v} w[o, c, u, v] * x[n, c, i*s + u, j*s + v]
    """
    x = require_tensor4(x, "conv input")
    n, c, h, w = x.shape
    co, ci, kh, kw = p.weight.shape
    if c != ci:
        raise ShapeError(
            f"conv2d: input has {c} channels but weight {p.weight.shape} expects {ci} "
            f"(input shape {x.shape})"
        )
    xp = _pad_same(x, kh, kw) if p.padding == "same" else x
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(
            f"conv2d: spatial dims {xp.shape[2]}x{xp.shape[3]} smaller than kernel {kh}x{kw}"
        )
    win = _conv_windows(xp, kh, kw, p.stride)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, ci * kh * kw)
    out = cols @ p.weight.reshape(co, -1).T + p.bias
    out = np.ascontiguousarray(out.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))
    cache = (cols, x.shape, xp.shape, p)
    return out, cache


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    out, _ = conv2d_forward(x, p)
    return out


def conv2d_backward(grad_out: np.ndarray, cache):
    """Gradients of a scalar loss w.r.t. conv input, weight and bias."""
    if cache is None:
        raise ValueError("conv2d_backward: missing forward cache")
    cols, x_shape, xp_shape, p = cache
    grad_out = require_tensor4(grad_out, "conv grad_out")
    n, co, oh, ow = grad_out.shape
    _, ci, kh, kw = p.weight.shape
    gcols = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    grad_b = grad_out.sum(axis=(0, 2, 3), dtype=np.float64).astype(grad_out.dtype)
    grad_w = (gcols.T @ cols).reshape(p.weight.shape)
    dwin = (gcols @ p.weight.reshape(co, -1)).reshape(n, oh, ow, ci, kh, kw)
    grad_xp = np.zeros(xp_shape, dtype=grad_out.dtype)
    s = p.stride
    for u in range(kh):
        for v in range(kw):
            grad_xp[:, :, u:u + oh * s:s, v:v + ow * s:s] += dwin[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    if xp_shape != x_shape:  # strip 'same' padding
        ph, pw = kh - 1, kw - 1
        t, l = ph // 2, pw // 2
        grad_x = grad_xp[:, :, t:t + x_shape[2], l:l + x_shape[3]]
    else:
        grad_x = grad_xp
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# batch statistics and standardization
# ---------------------------------------------------------------------------

def batch_stats(y: np.ndarray):
    """Per-channel mean and biased variance over the batch and spatial axes."""
    y = require_tensor4(y, "batch_stats input")
    n, c, h, w = y.shape
    if n * h * w == 0 or c == 0:
        raise ShapeError(f"batch_stats: empty tensor {y.shape}")
    mu = y.mean(axis=(0, 2, 3), dtype=np.float64)
    var = np.square(y - mu[None, :, None, None]).mean(axis=(0, 2, 3), dtype=np.float64)
    var = np.maximum(var, 0.0)
    return mu.astype(y.dtype), var.astype(y.dtype)


def standardize_forward(y: np.ndarray, eps: float):
    """yhat = (y - mu) / sqrt(var + eps), stats over (n, h, w) per channel."""
    if eps <= 0:
        raise ValueError(f"standardize: eps must be positive, got {eps}")
    mu, var = batch_stats(y)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=y.dtype))
    yhat = (y - mu[None, :, None, None]) * inv_std[None, :, None, None]
    return yhat, (yhat, inv_std)


def standardize_backward(grad_out: np.ndarray, cache):
    """Backward of standardize_forward, including the mu/var dependence on y.

    grad_y = inv_std * (g - mean(g) - yhat * mean(g * yhat)), means over (n, h, w).
    """
    if cache is None:
        raise ValueError("standardize_backward: missing forward cache")
    yhat, inv_std = cache
    g = grad_out
    mean_g = g.mean(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype)
    mean_gy = (g * yhat).mean(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype)
    return inv_std[None, :, None, None] * (
        g - mean_g[None, :, None, None] - yhat * mean_gy[None, :, None, None]
    )


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def upsample(z: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor upsampling; source index = floor(i * src / target)."""
    z = require_tensor4(z, "upsample input")
    _, _, h, w = z.shape
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"upsample: target dims must be positive, got {target_h}x{target_w}")
    if target_h < h or target_w < w:
        raise ShapeError(
            f"upsample: target {target_h}x{target_w} smaller than source {h}x{w}"
        )
    ri = (np.arange(target_h) * h) // target_h
    ci = (np.arange(target_w) * w) // target_w
    return z[:, :, ri][:, :, :, ci]


def sum_by_index(a: np.ndarray, idx: np.ndarray, axis: int, size: int) -> np.ndarray:
    """Sum slices of `a` along `axis` into groups given by the non-decreasing
    index vector `idx` (one entry per slice); result has `size` slots."""
    idx = np.asarray(idx)
    starts = np.flatnonzero(np.r_[True, np.diff(idx) != 0])
    sums = np.add.reduceat(a, starts, axis=axis)
    shape = list(a.shape)
    shape[axis] = size
    out = np.zeros(shape, dtype=a.dtype)
    sel = [slice(None)] * a.ndim
    sel[axis] = idx[starts]
    out[tuple(sel)] = sums
    return out


def upsample_backward(grad_out: np.ndarray, source_h: int, source_w: int) -> np.ndarray:
    """Accumulate each output pixel's gradient onto its nearest-neighbor source."""
    grad_out = require_tensor4(grad_out, "upsample grad_out")
    th, tw = grad_out.shape[2], grad_out.shape[3]
    ri = (np.arange(th) * source_h) // th
    ci = (np.arange(tw) * source_w) // tw
    g = sum_by_index(grad_out, ri, axis=2, size=source_h)
    return sum_by_index(g, ci, axis=3, size=source_w)


# ---------------------------------------------------------------------------
# nonlinearities and pooling
# ---------------------------------------------------------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x: np.ndarray):
    out = sigmoid(x)
    return out, out


def sigmoid_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    out = cache
    return grad_out * out * (1.0 - out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x), 0)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    return grad_out * cache


def maxpool2(x: np.ndarray) -> np.ndarray:
    out, _ = maxpool2_forward(x)
    return out


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pooling; requires even spatial dims."""
    x = require_tensor4(x, "maxpool2 input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    idx, x_shape = cache
    n, c, h, w = x_shape
    flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
    blocks = flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, h, w)
