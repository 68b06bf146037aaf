"""Synthetic image datasets with class-dependent frequency content.

Each sample is a Gaussian-envelope patch modulated by a sinusoid whose
frequency is set by the class, plus mild noise.  The classes are easy to
separate, which is the point: desk-scale pruning runs need a dataset a tiny
CNN can master quickly.
"""

from __future__ import annotations

import numpy as np


def make_blob_dataset(
    n: int,
    size: int = 16,
    classes: int = 2,
    channels: int = 1,
    seed: int = 0,
    noise: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (images, labels): float images (n, channels, size, size), u16 labels.

    Classes are balanced (label = i mod classes before shuffling) and the
    whole construction is deterministic under the seed.
    """
    if n < 1 or size < 2 or classes < 2 or channels < 1:
        raise ValueError("need n >= 1, size >= 2, classes >= 2, channels >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = np.zeros((n, channels, size, size))
    labels = np.arange(n) % classes

    # class c rides frequency 1 + c cycles across the patch; orientation and
    # phase vary per sample so the nets cannot key on a fixed pixel.
    for i in range(n):
        c = labels[i]
        freq = 1.0 + c
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        proj = np.cos(theta) * xx + np.sin(theta) * yy
        wave = np.sin(2 * np.pi * freq * proj / size + phase)
        cy, cx = rng.uniform(size * 0.3, size * 0.7, size=2)
        sigma = size / 3.0
        envelope = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2)))
        patch = envelope * wave + noise * rng.standard_normal((size, size))
        images[i] = patch[None, :, :]

    order = rng.permutation(n)
    return images[order], labels[order].astype(np.uint16)
