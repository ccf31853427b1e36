"""Synthetic quadrant dataset for end-to-end checks.

Each sample is uniform noise plus one bright Gaussian blob whose center sits
near the outer corner of the quadrant named by the label (0 top-left, 1
top-right, 2 bottom-left, 3 bottom-right). Corner placement matters: with a
global-average-pooled conv net, absolute position is only observable through
zero-padding effects at the image border, so hugging the corners gives the
classifier a real signal while keeping the blob (the attribution target)
comfortably inside its quadrant. Labels cycle 0..3 so classes stay balanced,
and everything is drawn from one SplitMix64 stream per call.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .rng import SplitMix64

NUM_CLASSES = 4


def _one_sample(rng: SplitMix64, label: int, size: int, channels: int,
                noise_level: float) -> np.ndarray:
    noise = rng.fill_uniform(size * size * channels, 0.0, noise_level)
    img = noise.reshape(size, size, channels)
    # corner-distance jitter first, then brightness and width
    cy = 4 + rng.randbelow(4)
    cx = 4 + rng.randbelow(4)
    peak = rng.uniform(0.9, 1.0)
    sigma = rng.uniform(2.2, 3.0)
    if label in (1, 3):
        cx = size - 1 - cx
    if label in (2, 3):
        cy = size - 1 - cy
    yy = np.arange(size)[:, None] - cy
    xx = np.arange(size)[None, :] - cx
    blob = peak * np.exp(-(yy * yy + xx * xx) / (2.0 * sigma * sigma))
    return np.clip(img + blob[:, :, None], 0.0, 1.0)


def make_quadrant_dataset(n_train: int = 400, n_test: int = 100, seed: int = 0,
                          size: int = 32, channels: int = 3,
                          noise_level: float = 0.25,
                          ) -> tuple[list[tuple[np.ndarray, int]],
                                     list[tuple[np.ndarray, int]]]:
    """Build (train, test) lists of (image, label); same seed, same data."""
    if size < 16:
        raise ArgumentError("quadrant images need size >= 16")
    if n_train < 1 or n_test < 0:
        raise ArgumentError("need at least one training sample")
    rng = SplitMix64(seed)
    train = [(_one_sample(rng, i % NUM_CLASSES, size, channels, noise_level),
              i % NUM_CLASSES) for i in range(n_train)]
    test = [(_one_sample(rng, i % NUM_CLASSES, size, channels, noise_level),
             i % NUM_CLASSES) for i in range(n_test)]
    return train, test


def quadrant_of(y: int, x: int, size: int) -> int:
    """Label of the quadrant containing pixel (y, x)."""
    half = size // 2
    return (0 if y < half else 2) + (0 if x < half else 1)
