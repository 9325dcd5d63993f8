"""Color disturbance model for the denoising objective.

Training corrupts each image with a single global color shift drawn from
a normal distribution whose covariance is built from the principal
components of the training data's colors: shift ~ N(0, W S W^T * eps),
where the columns of W are the component directions, S holds the
component variances, and eps scales the overall magnitude.  Shifted
images are clamped back to [0, 1]; eps = 0 leaves inputs untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class NoiseModel:
    """PCA color basis with per-component variances and a magnitude knob.

    w: (3, 3) orthonormal, columns are principal directions, largest
    variance first.  sigma: (3,) non-negative variances, descending.
    epsilon: magnitude in [0, 1); zero disables the disturbance.
    """

    w: np.ndarray
    sigma: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.w.shape != (3, 3):
            raise ValueError(f"w must be (3, 3), got {self.w.shape}")
        if self.sigma.shape != (3,):
            raise ValueError(f"sigma must be (3,), got {self.sigma.shape}")
        if np.max(np.abs(self.w.T @ self.w - np.eye(3))) > 1e-6:
            raise ValueError("w must be orthonormal within 1e-6")
        if np.any(self.sigma < 0):
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if np.any(np.diff(self.sigma) > 0):
            raise ValueError(f"sigma must be sorted descending, got {self.sigma}")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    @property
    def covariance(self) -> np.ndarray:
        """Covariance of the sampled shifts: eps * W S W^T."""
        return self.epsilon * (self.w * self.sigma) @ self.w.T


def fit_pca(pixels: np.ndarray, epsilon: float = 0.5) -> NoiseModel:
    """Principal color directions and variances of an (m, 3) pixel sample.

    Uses the population covariance.  Variances come back in descending
    order; each direction's sign is fixed so its largest-magnitude entry
    is positive, making the decomposition reproducible across solvers.
    A rank-deficient sample keeps zero variance on its null directions
    (with a warning), so sampling simply never moves along them.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2 or pixels.shape[1] != 3:
        raise ValueError(f"pixel sample must be (m, 3), got {pixels.shape}")
    if pixels.shape[0] < 3:
        raise ValueError(f"need at least 3 pixels to fit color directions, got {pixels.shape[0]}")
    cov = np.cov(pixels, rowvar=False, ddof=0)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    evals = np.maximum(evals, 0.0)
    if np.any(evals < 1e-12 * max(evals[0], 1e-30)):
        warnings.warn(
            "pixel colors are rank-deficient; disturbance variance is zero along "
            "the unoccupied directions",
            stacklevel=2,
        )
    for j in range(3):
        k = np.argmax(np.abs(evecs[:, j]))
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    return NoiseModel(w=evecs, sigma=evals, epsilon=epsilon)


def sample_shifts(model: NoiseModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` color shifts, one per image, shape (count, 3).

    shift = sqrt(eps) * W (sqrt(S) * u) with u ~ N(0, I), so the shifts
    have covariance eps * W S W^T before any clamping of the shifted image.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    u = rng.standard_normal((count, 3))
    scaled = u * np.sqrt(model.sigma)
    return np.sqrt(model.epsilon) * scaled @ model.w.T


def apply_noise(x: np.ndarray, model: NoiseModel, rng: np.random.Generator):
    """Corrupt a batch with per-image global color shifts; clamp to [0, 1].

    Returns (noisy, shifts); shifts are the pre-clamp per-image offsets.
    """
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"batch must be (n, 3, h, w), got {x.shape}")
    shifts = sample_shifts(model, x.shape[0], rng)
    noisy = x + shifts.astype(x.dtype)[:, :, None, None]
    np.clip(noisy, 0.0, 1.0, out=noisy)
    return noisy, shifts


def sample_disturbed(x: np.ndarray, model: NoiseModel, rng_seed) -> np.ndarray:
    """Disturbed copy of a batch, deterministic given the seed.

    `rng_seed` is anything numpy's default_rng accepts (an int seed, a
    SeedSequence, or an existing Generator to draw from).
    """
    noisy, _ = apply_noise(x, model, np.random.default_rng(rng_seed))
    return noisy
