"""Fixed-weight feature extractor producing the multi-scale steering pyramid.

The extractor is a sequential stack of valid 3x3 convolutions (each
followed by relu) and 2x2 max pooling.  Its weights are loaded from a
named-tensor container and are never trained.  Feature maps are tapped at
chosen depths (the full model taps three); each tap records where its
grid sits on the input:

    input_row = crop_offset.top + scale * feature_row

using the top-left convention for the pooled receptive-field centers.
Every valid k x k convolution adds scale * (k - 1) / 2 to the offset;
pooling doubles the scale.  When a pooling stage meets an odd spatial
extent, the last row/column is dropped first (bottom/right), which leaves
the offsets untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .ops import ConvParams, ShapeError, conv2d, maxpool2, relu


@dataclass
class ConvLayerSpec:
    """One extractor convolution: weights live at f.{name}.weight / f.{name}.bias."""

    name: str
    out_channels: int
    kernel: int = 3


@dataclass
class PoolSpec:
    pass


@dataclass
class ExtractorSpec:
    layers: list
    taps: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.taps:
            raise ValueError("extractor needs at least one tap")
        if sorted(set(self.taps)) != list(self.taps):
            raise ValueError(f"taps must be strictly increasing, got {self.taps}")
        n_conv_seen = 0
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayerSpec):
                if layer.kernel % 2 == 0 or layer.kernel < 1:
                    raise ValueError(f"layer {layer.name}: kernel must be odd, got {layer.kernel}")
                n_conv_seen += 1
            if i in self.taps:
                if not isinstance(layer, ConvLayerSpec):
                    raise ValueError(f"tap {i} must sit on a convolution layer")
                if n_conv_seen == 0:
                    raise ValueError(f"tap {i} precedes any convolution")

    def conv_layers(self) -> list[ConvLayerSpec]:
        return [l for l in self.layers if isinstance(l, ConvLayerSpec)]

    def tap_channels(self) -> list[int]:
        return [self.layers[i].out_channels for i in self.taps]


@dataclass
class PyramidLevel:
    tap_index: int
    z: np.ndarray
    crop_offset: tuple[int, int]  # (top, left) in input pixels
    scale: int

    @property
    def coverage(self):
        """((row_start, row_stop), (col_start, col_stop)) input rows/cols covered
        by the level's nearest-neighbor blocks; stop is exclusive."""
        _, _, h, w = self.z.shape
        t, l = self.crop_offset
        return (t, t + self.scale * h), (l, l + self.scale * w)


@dataclass
class FeaturePyramid:
    levels: list
    input_hw: tuple[int, int]


class WeightsError(ValueError):
    pass


def weight_names(spec: ExtractorSpec) -> list[str]:
    names = []
    for layer in spec.conv_layers():
        names.append(f"f.{layer.name}.weight")
        names.append(f"f.{layer.name}.bias")
    return names


def _resolve_params(spec: ExtractorSpec, weights: dict) -> list[ConvParams]:
    missing = [n for n in weight_names(spec) if n not in weights]
    if missing:
        raise WeightsError(f"container is missing extractor weights: {', '.join(missing)}")
    params = []
    in_ch = 3
    for layer in spec.conv_layers():
        w = weights[f"f.{layer.name}.weight"]
        b = weights[f"f.{layer.name}.bias"]
        expect = (layer.out_channels, in_ch, layer.kernel, layer.kernel)
        if tuple(w.shape) != expect:
            raise WeightsError(
                f"f.{layer.name}.weight has shape {tuple(w.shape)}, spec expects {expect}"
            )
        params.append(ConvParams(weight=w, bias=b))
        in_ch = layer.out_channels
    return params


def simulate_geometry(spec: ExtractorSpec, h: int, w: int):
    """Tap geometry [(tap_index, (oh, ow), (off_t, off_l), scale)] without running data.

    Raises ShapeError when the input is too small for some tap to be non-empty.
    """
    off_t = off_l = 0
    scale = 1
    taps = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec):
            k = layer.kernel
            if h < k or w < k:
                raise ShapeError(f"spatial extent {h}x{w} too small for {k}x{k} convolution")
            h, w = h - k + 1, w - k + 1
            off_t += scale * ((k - 1) // 2)
            off_l += scale * ((k - 1) // 2)
        else:
            h, w = h - h % 2, w - w % 2  # drop odd last row/col before pooling
            if h < 2 or w < 2:
                raise ShapeError(f"spatial extent {h}x{w} too small for 2x2 pooling")
            h, w = h // 2, w // 2
            scale *= 2
        if i in spec.taps:
            taps.append((i, (h, w), (off_t, off_l), scale))
    return taps


def minimum_input_size(spec: ExtractorSpec) -> int:
    """Smallest square input for which every tap is non-empty."""
    for size in range(1, 8192):
        try:
            simulate_geometry(spec, size, size)
        except ShapeError:
            continue
        return size
    raise ValueError("extractor spec admits no input up to 8192 pixels")


def extract(x: np.ndarray, spec: ExtractorSpec, weights: dict,
            preprocess_mean=None) -> FeaturePyramid:
    """Run the frozen extractor and collect the tapped feature maps.

    `preprocess_mean`, when given, is a length-3 per-channel mean subtracted
    from the [0, 1] RGB input first (used with imported pretrained weights).
    """
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"extractor input must be (n, 3, h, w), got {x.shape}")
    n, _, h, w = x.shape
    try:
        simulate_geometry(spec, h, w)
    except ShapeError:
        raise ShapeError(
            f"input {h}x{w} too small for the extractor; minimum admissible size is "
            f"{minimum_input_size(spec)}x{minimum_input_size(spec)}"
        ) from None
    params = _resolve_params(spec, weights)
    cur = x
    if preprocess_mean is not None:
        mean = np.asarray(preprocess_mean, dtype=cur.dtype).reshape(1, 3, 1, 1)
        cur = cur - mean

    off_t = off_l = 0
    scale = 1
    conv_iter = iter(params)
    levels = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec):
            p = next(conv_iter)
            cur = relu(conv2d(cur, p))
            k = layer.kernel
            off_t += scale * ((k - 1) // 2)
            off_l += scale * ((k - 1) // 2)
        else:
            hh, ww = cur.shape[2], cur.shape[3]
            cur = cur[:, :, :hh - hh % 2, :ww - ww % 2]
            cur = maxpool2(cur)
            scale *= 2
        if i in spec.taps:
            levels.append(PyramidLevel(i, cur, (off_t, off_l), scale))
    return FeaturePyramid(levels, (h, w))


# ---------------------------------------------------------------------------
# concrete specs
# ---------------------------------------------------------------------------

_VGG_PREFIX = [
    ("conv1_1", 64), ("conv1_2", 64), None,
    ("conv2_1", 128), ("conv2_2", 128), None,
    ("conv3_1", 256), ("conv3_2", 256), ("conv3_3", 256), ("conv3_4", 256),
]

_TINY_PREFIX = [
    ("conv1_1", 4), ("conv1_2", 4), None,
    ("conv2_1", 6), ("conv2_2", 6), None,
    ("conv3_1", 8), ("conv3_2", 8),
]


def _spec_from_prefix(prefix, tap_names) -> ExtractorSpec:
    layers = []
    taps = []
    for item in prefix:
        if item is None:
            layers.append(PoolSpec())
        else:
            name, ch = item
            layers.append(ConvLayerSpec(name, ch))
            if name in tap_names:
                taps.append(len(layers) - 1)
    return ExtractorSpec(layers=layers, taps=taps)


def default_vgg_spec() -> ExtractorSpec:
    """VGG-19 convolutional prefix through block 3, tapped at the last
    convolution of blocks 1, 2 and 3 (scales 1, 2, 4)."""
    return _spec_from_prefix(_VGG_PREFIX, {"conv1_2", "conv2_2", "conv3_4"})


def tiny_spec(seed: int = 0):
    """Desk-scale 3-block extractor with deterministic pseudo-random weights.

    Weight values are drawn layer by layer, in layer order, in row-major
    (c_out, c_in, k, k) order, as uniform[-b, b] float32 with
    b = sqrt(6 / (c_in * k * k)) from one SplitMix64 stream seeded with
    `seed`; biases are zero.  Same seed, same bits, in any implementation.
    """
    spec = _spec_from_prefix(_TINY_PREFIX, {"conv1_2", "conv2_2", "conv3_2"})
    stream = rng.SplitMix64(seed)
    weights: dict = {}
    in_ch = 3
    for layer in spec.conv_layers():
        k = layer.kernel
        bound = math.sqrt(6.0 / (in_ch * k * k))
        n_vals = layer.out_channels * in_ch * k * k
        vals = np.empty(n_vals, dtype=np.float32)
        for j in range(n_vals):
            vals[j] = np.float32((2.0 * stream.uniform() - 1.0) * bound)
        weights[f"f.{layer.name}.weight"] = vals.reshape(
            layer.out_channels, in_ch, k, k
        )
        weights[f"f.{layer.name}.bias"] = np.zeros(layer.out_channels, dtype=np.float32)
        in_ch = layer.out_channels
    return spec, weights


def spec_from_weights(weights: dict) -> ExtractorSpec:
    """Reconstruct the extractor layout from f.conv{b}_{i}.* entry names.

    Blocks are separated by pooling; taps sit at the last convolution of
    the first three blocks.
    """
    convs: dict = {}
    for name in weights:
        if name.startswith("f.conv") and name.endswith(".weight"):
            label = name[len("f."):-len(".weight")]
            try:
                block, idx = label[4:].split("_")
                convs.setdefault(int(block), []).append((int(idx), label))
            except ValueError:
                raise WeightsError(f"unrecognized extractor entry name {name!r}") from None
    if sorted(convs) != [1, 2, 3]:
        raise WeightsError(
            f"extractor weights must cover conv blocks 1..3, found blocks {sorted(convs)}"
        )
    prefix = []
    tap_names = set()
    for block in (1, 2, 3):
        entries = sorted(convs[block])
        if [i for i, _ in entries] != list(range(1, len(entries) + 1)):
            raise WeightsError(f"block {block} convolutions are not consecutive: {entries}")
        for _, label in entries:
            prefix.append((label, weights[f"f.{label}.weight"].shape[0]))
        tap_names.add(entries[-1][1])
        if block != 3:
            prefix.append(None)
    return _spec_from_prefix(prefix, tap_names)
