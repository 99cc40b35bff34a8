"""Deterministic synthetic beach scenes for demos, smoke runs and tests.

Scenes are sandy textures with elliptical "crabs": class 0 (underwater) is a
dark blue-green blob, class 1 (on sand) a bright orange one — visually
trivial, which is the point: desk-scale training runs must converge fast.
"""

from __future__ import annotations

import numpy as np

from .boxes import BoundingBox
from .imaging import ImageBuffer, ResampleSpec, degrade, resample_bicubic

_UNDERWATER = np.array([0.10, 0.25, 0.40])
_ON_SAND = np.array([0.95, 0.55, 0.10])


def make_texture(rng: np.random.Generator, side: int, channels: int = 3,
                 low: float = 0.55, high: float = 0.85, grain: float = 0.02) -> ImageBuffer:
    """Smooth sandy texture: bicubically upsampled coarse noise.

    ``grain`` adds per-pixel speckle; keep it 0 for SR pairs, where
    unrecoverable noise would put a floor under every method alike.
    """
    coarse = rng.uniform(low, high, size=(max(side // 8, 2), max(side // 8, 2), channels))
    img = resample_bicubic(ImageBuffer(np.clip(coarse, 0, 1)), ResampleSpec(side, side))
    if grain <= 0:
        return img
    speckle = rng.uniform(-grain, grain, size=(side, side, channels))
    return ImageBuffer(np.clip(img.pixels + speckle, 0.0, 1.0))


def make_crab_scene(
    rng: np.random.Generator,
    side: int,
    n_crabs: int = 3,
    min_frac: float = 0.12,
    max_frac: float = 0.25,
    grain: float = 0.02,
) -> tuple[ImageBuffer, list[BoundingBox]]:
    """A sandy tile with non-overlapping elliptical crabs and tight boxes."""
    canvas = make_texture(rng, side, grain=grain).pixels.copy()
    ys, xs = np.mgrid[0:side, 0:side]
    boxes: list[BoundingBox] = []
    attempts = 0
    while len(boxes) < n_crabs and attempts < 200:
        attempts += 1
        w = rng.uniform(min_frac, max_frac)
        h = rng.uniform(min_frac, max_frac)
        cx = rng.uniform(w / 2 + 0.02, 1.0 - w / 2 - 0.02)
        cy = rng.uniform(h / 2 + 0.02, 1.0 - h / 2 - 0.02)
        candidate = BoundingBox(int(rng.integers(2)), cx, cy, w, h)
        if any(_boxes_touch(candidate, b) for b in boxes):
            continue
        color = _UNDERWATER if candidate.class_id == 0 else _ON_SAND
        rx, ry = w * side / 2.0, h * side / 2.0
        mask = ((xs - cx * side) / rx) ** 2 + ((ys - cy * side) / ry) ** 2 <= 1.0
        shade = 1.0 - 0.25 * ((xs - cx * side) / max(rx, 1.0)) ** 2
        for c in range(3):
            canvas[:, :, c][mask] = np.clip(color[c] * shade[mask], 0.0, 1.0)
        boxes.append(candidate)
    return ImageBuffer(np.clip(canvas, 0.0, 1.0)), boxes


def _boxes_touch(a: BoundingBox, b: BoundingBox) -> bool:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    return not (ax2 + 0.02 < bx1 or bx2 + 0.02 < ax1 or ay2 + 0.02 < by1 or by2 + 0.02 < ay1)


def make_sr_pairs(
    rng: np.random.Generator, n_pairs: int, hr_side: int, magnification: int
) -> list[tuple[ImageBuffer, ImageBuffer]]:
    """(LR, HR) pairs: noise-free scenes with crisp shapes, degraded bicubically."""
    pairs = []
    for _ in range(n_pairs):
        hr, _ = make_crab_scene(rng, hr_side, n_crabs=4, min_frac=0.15, max_frac=0.3, grain=0.0)
        pairs.append((degrade(hr, magnification), hr))
    return pairs


def make_detection_dataset(
    rng: np.random.Generator, n_tiles: int, side: int, n_crabs: int = 3
) -> list[tuple[ImageBuffer, list[BoundingBox]]]:
    return [make_crab_scene(rng, side, n_crabs=n_crabs) for _ in range(n_tiles)]
