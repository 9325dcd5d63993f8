"""Synthetic two-tone tissue images for desk-scale experiments.

Each image is a plasma-colored background scattered with dark elliptical
nuclei, loosely following the look of an H&E slide: pink field, purple
blobs.  The field and nucleus colors are fixed reference values so the
whole dataset shares one palette; per-pixel luminance texture gives the
structural metrics something to hold on to.  Everything is driven by one
Generator, so a seeded call sequence reproduces the dataset exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .images import write_image

PLASMA_RGB = np.array([0.91, 0.79, 0.86])
NUCLEUS_RGB = np.array([0.38, 0.26, 0.55])


def tissue_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One (3, size, size) float32 image in [0, 1]."""
    img = np.empty((3, size, size))
    img[:] = PLASMA_RGB[:, None, None]

    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(4, 10))):
        cy, cx = rng.uniform(0, size, size=2)
        a = rng.uniform(3.0, 8.0)
        b = a * rng.uniform(0.55, 1.0)
        theta = rng.uniform(0.0, np.pi)
        u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
        mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        color = NUCLEUS_RGB + rng.normal(scale=0.02, size=3)
        img[:, mask] = color[:, None]

    texture = rng.normal(scale=0.015, size=(size, size))
    img += texture[None]
    img += rng.normal(scale=0.004, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def tissue_dataset(seed: int, count: int, size: int = 64) -> list:
    """Deterministic list of (name, image) pairs."""
    rng = np.random.default_rng(seed)
    return [(f"tissue_{i:04d}.png", tissue_image(rng, size)) for i in range(count)]


def write_dataset(out_dir, seed: int, count: int, size: int = 64) -> list:
    """Write a seeded dataset as PNGs into out_dir; returns the paths."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, img in tissue_dataset(seed, count, size):
        path = out_dir / name
        write_image(img, path)
        paths.append(path)
    return paths
