"""Feature-steered correction units.

Each unit rescales and shifts a standardized latent map, pixel by pixel:

    out = standardize(y) * sigmoid(W_m z) + relu(W_a z)

where z is one level of the frozen feature pyramid and W_m, W_a are
bias-free 1x1 maps from feature channels to latent channels.  The
standardization uses batch statistics of the map it is applied to, so the
unit is a normalization layer whose correction is steered by image
content rather than learned per-channel constants.  The full model
applies one unit per pyramid level, deepest first.

Geometry: y lives on the input pixel grid at some (top, left) offset; a
feature level covers input rows [t, t + s * h_z).  The unit is defined
only where the two overlap, so y is cropped to the intersection first and
the output's offset is reported in the cache.  Gates are computed at
feature resolution and replicated to pixel resolution (the maps are 1x1,
so this equals upsampling z first); their backward pass sums pixel
gradients back onto the feature cells that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import GradTape, Param
from .extractor import FeaturePyramid, PyramidLevel
from .ops import (
    ConvParams,
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    relu,
    sigmoid,
    standardize_backward,
    standardize_forward,
    sum_by_index,
)

DEFAULT_EPS = 1e-5


@dataclass
class FanUnitParams:
    """Gate weights of one unit: (latent, feature_channels) maps realized
    as bias-free 1x1 convolutions, plus the standardization epsilon."""

    w_mult: np.ndarray
    w_add: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        self.w_mult = _as_gate(np.asarray(self.w_mult), "w_mult")
        self.w_add = _as_gate(np.asarray(self.w_add), "w_add")
        if self.w_mult.shape != self.w_add.shape:
            raise ShapeError(
                f"gate shapes disagree: w_mult {self.w_mult.shape} vs w_add {self.w_add.shape}"
            )
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def _as_gate(w: np.ndarray, name: str) -> np.ndarray:
    if w.ndim == 2:
        return w[:, :, None, None]
    if w.ndim == 4 and w.shape[2:] == (1, 1):
        return w
    raise ShapeError(
        f"{name} must be (latent, features) or (latent, features, 1, 1), got {w.shape}"
    )


@dataclass
class FanStack:
    """One unit per pyramid level, applied deepest first.

    The full pipeline uses three units; apply_stack checks the count
    against the pyramid it is given, so smaller stacks stay usable for
    single-level compositions."""

    units: list

    def __post_init__(self):
        if not self.units:
            raise ValueError("stack needs at least one unit")


@dataclass
class FanCache:
    """Everything fan_backward needs, including the output window offset."""

    offset: tuple[int, int]
    y_shape: tuple
    crop: tuple | None
    std_cache: tuple
    mult: np.ndarray
    m_feat: np.ndarray
    pre_a: np.ndarray
    conv_m_cache: tuple
    conv_a_cache: tuple
    row_idx: np.ndarray
    col_idx: np.ndarray
    feature_hw: tuple[int, int]


def fan_forward(y: np.ndarray, z_level: PyramidLevel, params: FanUnitParams,
                offset: tuple[int, int] = (0, 0)):
    """One correction unit; returns (out, cache).

    `offset` is the (top, left) input-pixel position of y's first element.
    The output covers the intersection of y's window with the feature
    level's coverage; its offset is cache.offset.
    """
    y = np.asarray(y)
    if y.ndim != 4:
        raise ShapeError(f"fan input must be rank-4, got {y.shape}")
    n, c, h, w = y.shape
    if params.w_mult.shape[0] != c:
        raise ShapeError(
            f"gates produce {params.w_mult.shape[0]} channels, input has {c}"
        )
    z = z_level.z
    if params.w_mult.shape[1] != z.shape[1]:
        raise ShapeError(
            f"gates expect {params.w_mult.shape[1]} feature channels, level has {z.shape[1]}"
        )

    a_t, a_l = offset
    (r0c, r1c), (c0c, c1c) = z_level.coverage
    r0, r1 = max(a_t, r0c), min(a_t + h, r1c)
    c0, c1 = max(a_l, c0c), min(a_l + w, c1c)
    if r1 <= r0 or c1 <= c0:
        raise ShapeError(
            f"window rows [{a_t}, {a_t + h}) cols [{a_l}, {a_l + w}) do not overlap "
            f"feature coverage rows [{r0c}, {r1c}) cols [{c0c}, {c1c})"
        )
    ys, ye, xs, xe = r0 - a_t, r1 - a_t, c0 - a_l, c1 - a_l
    crop = None
    if (ys, ye, xs, xe) != (0, h, 0, w):
        crop = (ys, ye, xs, xe)
        y = y[:, :, ys:ye, xs:xe]

    yhat, std_cache = standardize_forward(y, params.eps)

    bias = np.zeros(params.w_mult.shape[0], dtype=params.w_mult.dtype)
    pre_m, conv_m_cache = conv2d_forward(z, ConvParams(params.w_mult, bias))
    pre_a, conv_a_cache = conv2d_forward(z, ConvParams(params.w_add, bias))
    m_feat = sigmoid(pre_m)
    a_feat = relu(pre_a)

    t_t, t_l = z_level.crop_offset
    s = z_level.scale
    row_idx = (np.arange(r0, r1) - t_t) // s
    col_idx = (np.arange(c0, c1) - t_l) // s
    mult = m_feat[:, :, row_idx][:, :, :, col_idx]
    add = a_feat[:, :, row_idx][:, :, :, col_idx]
    out = yhat * mult + add

    cache = FanCache(
        offset=(r0, c0),
        y_shape=(n, c, h, w),
        crop=crop,
        std_cache=std_cache,
        mult=mult,
        m_feat=m_feat,
        pre_a=pre_a,
        conv_m_cache=conv_m_cache,
        conv_a_cache=conv_a_cache,
        row_idx=row_idx,
        col_idx=col_idx,
        feature_hw=(z.shape[2], z.shape[3]),
    )
    return out, cache


def fan_backward(grad_out: np.ndarray, cache: FanCache):
    """Gradients w.r.t. the (uncropped) input map and both gate weights.

    Includes the dependence of the batch statistics on y.
    """
    if cache is None:
        raise ValueError("fan_backward: missing forward cache")
    g = np.asarray(grad_out)
    yhat, _ = cache.std_cache
    hz, wz = cache.feature_hw

    def to_feature_grid(a):
        a = sum_by_index(a, cache.row_idx, axis=2, size=hz)
        return sum_by_index(a, cache.col_idx, axis=3, size=wz)

    d_mult = to_feature_grid(g * yhat)
    d_pre_m = d_mult * cache.m_feat * (1.0 - cache.m_feat)
    _, grad_wm, _ = conv2d_backward(d_pre_m, cache.conv_m_cache)

    d_add = to_feature_grid(g)
    d_pre_a = d_add * (cache.pre_a > 0)
    _, grad_wa, _ = conv2d_backward(d_pre_a, cache.conv_a_cache)

    grad_y = standardize_backward(g * cache.mult, cache.std_cache)
    if cache.crop is not None:
        ys, ye, xs, xe = cache.crop
        full = np.zeros(cache.y_shape, dtype=grad_y.dtype)
        full[:, :, ys:ye, xs:xe] = grad_y
        grad_y = full
    return grad_y, grad_wm, grad_wa


def apply_stack(y: np.ndarray, pyramid: FeaturePyramid, stack: FanStack,
                offset: tuple[int, int] = (0, 0)):
    """Run all units deepest level first; returns (out, final_offset)."""
    if len(stack.units) != len(pyramid.levels):
        raise ValueError(
            f"stack has {len(stack.units)} units but pyramid has "
            f"{len(pyramid.levels)} levels"
        )
    for params, level in zip(stack.units, reversed(pyramid.levels)):
        y, cache = fan_forward(y, level, params, offset)
        offset = cache.offset
    return y, offset


# ---------------------------------------------------------------------------
# trainable wrapper
# ---------------------------------------------------------------------------

@dataclass
class FanUnit:
    """Named trainable gate parameters of one unit."""

    index: int
    w_mult: Param
    w_add: Param

    @classmethod
    def create(cls, index: int, latent_channels: int, feature_channels: int,
               rng: np.random.Generator) -> "FanUnit":
        bound = 1.0 / np.sqrt(feature_channels)
        shape = (latent_channels, feature_channels, 1, 1)
        wm = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        wa = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        return cls(
            index=index,
            w_mult=Param(name=f"fan.{index}.w_mult", data=wm),
            w_add=Param(name=f"fan.{index}.w_add", data=wa),
        )

    @classmethod
    def from_weights(cls, index: int, weights: dict) -> "FanUnit":
        out = {}
        for kind in ("w_mult", "w_add"):
            key = f"fan.{index}.{kind}"
            if key not in weights:
                raise KeyError(f"container is missing correction-unit entry {key}")
            out[kind] = Param(name=key, data=_as_gate(np.array(weights[key]), key))
        if out["w_mult"].data.shape != out["w_add"].data.shape:
            raise ShapeError(
                f"fan.{index} gate shapes disagree: "
                f"{out['w_mult'].data.shape} vs {out['w_add'].data.shape}"
            )
        return cls(index=index, w_mult=out["w_mult"], w_add=out["w_add"])


def apply_unit(tape: GradTape, y: np.ndarray, offset: tuple[int, int],
               level: PyramidLevel, unit: FanUnit, eps: float):
    """Tape-recorded fan_forward accumulating gate gradients on the unit."""
    params = FanUnitParams(unit.w_mult.data, unit.w_add.data, eps)
    out, cache = fan_forward(y, level, params, offset)

    def bwd(g):
        grad_y, grad_wm, grad_wa = fan_backward(g, cache)
        unit.w_mult.add_grad(grad_wm)
        unit.w_add.add_grad(grad_wa)
        return grad_y

    tape.record(f"fan.{unit.index}", bwd)
    return out, cache.offset
