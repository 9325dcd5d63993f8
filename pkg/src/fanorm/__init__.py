"""Feature-aware color normalization.

A two-path pipeline: a trainable pixelwise color transform, corrected in
its latent space by units whose scale-and-shift gates are steered by a
frozen convolutional feature extractor.  Trained purely by denoising
global color shifts, so no labels or reference pairs are needed.
"""

from .container import ContainerError, load_container, parse_container, save_container
from .extractor import (
    ExtractorSpec,
    FeaturePyramid,
    default_vgg_spec,
    extract,
    minimum_input_size,
    spec_from_weights,
    tiny_spec,
)
from .fan import FanStack, FanUnitParams, apply_stack, fan_backward, fan_forward
from .images import ImageFormatError, read_image, write_image
from .metrics import (
    HistogramKDE,
    MetricsReport,
    evaluate_pairs,
    kde_histogram,
    lab_volume,
    rgb_to_lab,
    sdsim,
    ssdh,
)
from .model import NormalizationModel
from .noise import NoiseModel, apply_noise, fit_pca, sample_disturbed, sample_shifts
from .ops import ShapeError
from .trainer import (
    TrainConfig,
    TrainResult,
    evaluate_loss,
    extract_patches,
    train,
)
from .transformer import Transformer, init_transformer

__version__ = "0.1.0"

__all__ = [
    "ContainerError",
    "ExtractorSpec",
    "FanStack",
    "FanUnitParams",
    "FeaturePyramid",
    "HistogramKDE",
    "ImageFormatError",
    "MetricsReport",
    "NoiseModel",
    "NormalizationModel",
    "ShapeError",
    "TrainConfig",
    "TrainResult",
    "Transformer",
    "apply_noise",
    "apply_stack",
    "default_vgg_spec",
    "evaluate_loss",
    "evaluate_pairs",
    "extract",
    "extract_patches",
    "fan_backward",
    "fan_forward",
    "fit_pca",
    "init_transformer",
    "kde_histogram",
    "lab_volume",
    "load_container",
    "minimum_input_size",
    "parse_container",
    "read_image",
    "rgb_to_lab",
    "sample_disturbed",
    "sample_shifts",
    "save_container",
    "sdsim",
    "spec_from_weights",
    "ssdh",
    "tiny_spec",
    "train",
    "write_image",
]
