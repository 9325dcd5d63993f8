"""Evaluation metrics for normalized images.

Three views of quality, computed on (3, h, w) float images in [0, 1]:

* ssdh       -- distance between smoothed per-channel color histograms;
                low when two images share a color distribution.
* sdsim      -- structural dissimilarity, (1 - mean SSIM) / 2 on
                luminance; low when image structure is preserved.
* lab_volume -- product of per-channel standard deviations in CIELAB;
                high when an image retains color spread instead of
                collapsing toward gray.

evaluate_pairs runs all three over directories of same-named files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .images import ImageFormatError, read_image
from .ops import ShapeError

HISTOGRAM_BINS = 256

# binomial smoothing kernel, mass 1
SMOOTHING_KERNEL = np.array([1, 6, 15, 20, 15, 6, 1], dtype=np.float64) / 64.0

# sRGB / D65 color constants
RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
LAB_WHITE = np.array([0.95047, 1.0, 1.08883])
LAB_E = 216.0 / 24389.0
LAB_K = 24389.0 / 27.0

# structural-similarity constants
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# sidecar written next to normalized images: name, top, left, height, width
WINDOW_SIDECAR = "windows.tsv"


def _require_image(img, name="image") -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 4 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"{name} must be (3, h, w), got {img.shape}")
    if img.shape[1] == 0 or img.shape[2] == 0:
        raise ShapeError(f"{name} is empty: {img.shape}")
    return img.astype(np.float64)


# ---------------------------------------------------------------------------
# color histograms
# ---------------------------------------------------------------------------

@dataclass
class HistogramKDE:
    """Smoothed per-channel value densities: (3, 256), each row mass 1."""

    bins: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64)
        if self.bins.shape != (3, HISTOGRAM_BINS):
            raise ShapeError(f"histogram must be (3, {HISTOGRAM_BINS}), got {self.bins.shape}")
        if np.any(self.bins < 0):
            raise ValueError("histogram has negative mass")
        sums = self.bins.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"histogram channels must sum to 1, got {sums}")


def kde_histogram(img) -> HistogramKDE:
    """Smoothed 256-bin histograms of the 8-bit quantized channel values.

    Values are binned by floor(v * 255 + 0.5) (the same quantization the
    image codecs use), counts normalized to mass 1, then convolved with
    the binomial kernel.  Near the edges the kernel is truncated;
    dividing each bin by the local kernel mass before convolving keeps
    every channel's total mass at exactly 1.
    """
    img = _require_image(img)
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.intp)
    local_mass = np.convolve(np.ones(HISTOGRAM_BINS), SMOOTHING_KERNEL, mode="same")
    out = np.empty((3, HISTOGRAM_BINS))
    for c in range(3):
        counts = np.bincount(q[c].ravel(), minlength=HISTOGRAM_BINS).astype(np.float64)
        density = counts / counts.sum()
        out[c] = np.convolve(density / local_mass, SMOOTHING_KERNEL, mode="same")
    return HistogramKDE(out)


def _as_histogram(h) -> np.ndarray:
    if isinstance(h, HistogramKDE):
        return h.bins
    return HistogramKDE(h).bins


def ssdh(a, b) -> float:
    """Sum of squared differences between two smoothed color histograms.

    Accepts HistogramKDE objects or raw (3, 256) densities.
    """
    return float(np.sum((_as_histogram(a) - _as_histogram(b)) ** 2))


# ---------------------------------------------------------------------------
# structural dissimilarity
# ---------------------------------------------------------------------------

def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed_mean(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    win = sliding_window_view(x, w.shape)
    return np.tensordot(win, w, axes=([2, 3], [0, 1]))


def sdsim(a, b) -> float:
    """Structural dissimilarity (1 - mean SSIM) / 2 between two images.

    SSIM runs on Rec.601 luminance with an 11x11 Gaussian window
    (sigma 1.5), weighted uncorrected moments, dynamic range 1, and no
    padding: only fully covered windows contribute.  0 means identical
    structure; 0.5 means none shared; 1 means anticorrelated.
    """
    a, b = _require_image(a, "first image"), _require_image(b, "second image")
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    ya = np.tensordot(LUMA_WEIGHTS, a, axes=(0, 0))
    yb = np.tensordot(LUMA_WEIGHTS, b, axes=(0, 0))
    if ya.shape[0] < SSIM_WINDOW or ya.shape[1] < SSIM_WINDOW:
        raise ShapeError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for the "
            f"structural comparison, got {ya.shape}"
        )
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _windowed_mean(ya, w)
    mu_b = _windowed_mean(yb, w)
    var_a = _windowed_mean(ya * ya, w) - mu_a ** 2
    var_b = _windowed_mean(yb * yb, w) - mu_b ** 2
    cov = _windowed_mean(ya * yb, w) - mu_a * mu_b
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )
    return float((1.0 - ssim_map.mean()) / 2.0)


# ---------------------------------------------------------------------------
# CIELAB
# ---------------------------------------------------------------------------

def rgb_to_lab(img) -> np.ndarray:
    """sRGB [0, 1] to CIELAB under D65; accepts (3, h, w) or (n, 3, h, w).

    Returns the same rank it was given.
    """
    arr = np.asarray(img)
    if arr.ndim == 4:
        return np.stack([rgb_to_lab(one) for one in arr])
    srgb = np.clip(_require_image(arr), 0.0, 1.0)
    linear = np.where(
        srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4
    )
    xyz = np.tensordot(RGB_TO_XYZ, linear, axes=(1, 0))
    t = xyz / LAB_WHITE[:, None, None]
    f = np.where(t > LAB_E, np.cbrt(t), (LAB_K * t + 16.0) / 116.0)
    lab = np.empty_like(xyz)
    lab[0] = 116.0 * f[1] - 16.0
    lab[1] = 500.0 * (f[0] - f[1])
    lab[2] = 200.0 * (f[1] - f[2])
    return lab


def lab_volume(img) -> float:
    """Product of the population standard deviations of L*, a*, b*."""
    lab = rgb_to_lab(_require_image(img))
    stds = lab.reshape(3, -1).std(axis=1)
    return float(np.prod(stds))


# ---------------------------------------------------------------------------
# directory evaluation
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    pair_id: str
    ssdh: float
    sdsim: float
    lab_volume: float


@dataclass
class PairResults:
    reports: list
    mean: tuple | None
    std: tuple | None
    failures: list  # (pair_id, message)


def _load_window_sidecar(norm_dir: Path) -> dict:
    sidecar = norm_dir / WINDOW_SIDECAR
    windows = {}
    if sidecar.exists():
        for line in sidecar.read_text().splitlines():
            if not line.strip():
                continue
            name, top, left, h, w = line.split("\t")
            windows[name] = (int(top), int(left), int(h), int(w))
    return windows


def _window_crop(img: np.ndarray, window, shape) -> np.ndarray:
    """Crop a full image to the normalized output's window: by recorded
    geometry when the sidecar knows it, else centered.  An image already
    at the output size is used as is."""
    h, w = shape
    if img.shape[1:] == (h, w):
        return img
    if window is not None:
        top, left, wh, ww = window
        if (wh, ww) != (h, w):
            raise ShapeError(f"recorded window {ww}x{wh} does not match image {w}x{h}")
    else:
        top, left = (img.shape[1] - h) // 2, (img.shape[2] - w) // 2
    if top < 0 or left < 0 or top + h > img.shape[1] or left + w > img.shape[2]:
        raise ShapeError(
            f"cannot take {h}x{w} window at ({top}, {left}) from "
            f"{img.shape[1]}x{img.shape[2]}"
        )
    return img[:, top:top + h, left:left + w]


def evaluate_pairs(normalized_dir, reference_dir, originals_dir) -> PairResults:
    """Score every normalized image against its same-named reference and
    original: ssdh vs the reference, sdsim vs the original, lab_volume of
    the normalized image itself.

    Full-size references and originals are cropped to the normalized
    output's window (recorded by the normalizing run in a sidecar file,
    centered otherwise).  Unmatched or unreadable pairs are skipped and
    listed in the result's failures.
    """
    norm_dir, ref_dir, orig_dir = Path(normalized_dir), Path(reference_dir), Path(originals_dir)
    for d in (norm_dir, ref_dir, orig_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    names = sorted(
        p.name for p in norm_dir.iterdir() if p.suffix.lower() in (".png", ".ppm")
    )
    windows = _load_window_sidecar(norm_dir)

    reports = []
    failures = []
    for name in names:
        try:
            for d, label in ((ref_dir, "reference"), (orig_dir, "originals")):
                if not (d / name).exists():
                    raise FileNotFoundError(f"no {label} counterpart in {d}")
            norm = read_image(norm_dir / name)[0]
            ref = read_image(ref_dir / name)[0]
            orig = read_image(orig_dir / name)[0]
            shape = norm.shape[1:]
            ref_c = _window_crop(ref, windows.get(name), shape)
            orig_c = _window_crop(orig, windows.get(name), shape)
            reports.append(MetricsReport(
                pair_id=name,
                ssdh=ssdh(kde_histogram(norm), kde_histogram(ref_c)),
                sdsim=sdsim(norm, orig_c),
                lab_volume=lab_volume(norm),
            ))
        except (OSError, ImageFormatError, ShapeError, ValueError) as exc:
            failures.append((name, str(exc)))

    mean = std = None
    if reports:
        arr = np.array([[r.ssdh, r.sdsim, r.lab_volume] for r in reports])
        mean = tuple(arr.mean(axis=0))
        std = tuple(arr.std(axis=0))
    return PairResults(reports=reports, mean=mean, std=std, failures=failures)
