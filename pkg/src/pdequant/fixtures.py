"""Synthetic byte-valued test images.

``textured_image`` mixes the ingredients that matter for diffusion
inpainting: smooth shading, sharp-edged shapes and an oscillating texture
patch, plus a little noise.  Same seed, same image.
"""

from __future__ import annotations

import numpy as np

from .imagegrid import ImageGrid


def textured_image(size: int = 64, seed: int = 0) -> ImageGrid:
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / (size - 1)

    img = 60 + 90 * x + 40 * y
    for _ in range(3):
        cx, cy = rng.uniform(0, 1, 2)
        width = rng.uniform(0.12, 0.3)
        img += rng.uniform(-50, 50) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))

    for _ in range(3):
        cx, cy = rng.uniform(0.15, 0.85, 2)
        r = rng.uniform(0.08, 0.18)
        img[(x - cx) ** 2 + (y - cy) ** 2 < r ** 2] += rng.uniform(-70, 70)

    x0, y0 = rng.uniform(0.0, 0.5, 2)
    patch = (x >= x0) & (x < x0 + 0.45) & (y >= y0) & (y < y0 + 0.4)
    freq = rng.uniform(8, 14)
    angle = rng.uniform(0, np.pi)
    stripes = 30 * np.sin(2 * np.pi * freq * (x * np.cos(angle) + y * np.sin(angle)))
    img[patch] += stripes[patch]

    img += rng.normal(0, 3, img.shape)
    return ImageGrid(np.clip(np.round(img), 10, 245))

