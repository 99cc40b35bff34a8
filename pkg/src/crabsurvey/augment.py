"""Label-consistent geometric and scale augmentation for tile datasets.

The geometric ops are the square-symmetry reflections/rotation that keep
normalized box coordinates exact: hflip maps cx -> 1-cx, vflip maps
cy -> 1-cy, rot180 both, transpose / anti-transpose swap the axes (square
tiles only). Scaling resizes the canvas by a fixed ratio and leaves
normalized coordinates untouched.

The default recipe crosses the 6 geometric ops with scale ratios
{1.0, 0.6, 0.7, 0.8, 0.9}, multiplying a dataset by exactly 30. It is a
config value, not a constant baked into the expansion logic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .boxes import BoundingBox
from .imaging import ImageBuffer, ResampleSpec, resample_bicubic

GEOMETRIC_KINDS = ("identity", "hflip", "vflip", "rot180", "transpose", "anti_transpose")
DEFAULT_SCALES = (1.0, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in GEOMETRIC_KINDS:
            raise ValueError(f"unknown augment kind: {self.kind}")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError(f"scale ratio must lie in (0, 1], got {self.scale}")

    @property
    def label(self) -> str:
        if self.scale == 1.0:
            return self.kind
        return f"{self.kind}_s{self.scale:g}"


def default_recipe(scales=DEFAULT_SCALES) -> list[AugmentOp]:
    return [AugmentOp(kind, s) for kind in GEOMETRIC_KINDS for s in scales]


def _flip_pixels(pixels: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return pixels
    if kind == "hflip":
        return pixels[:, ::-1]
    if kind == "vflip":
        return pixels[::-1, :]
    if kind == "rot180":
        return pixels[::-1, ::-1]
    if kind == "transpose":
        return np.swapaxes(pixels, 0, 1)
    if kind == "anti_transpose":
        return np.swapaxes(pixels[::-1, ::-1], 0, 1)
    raise ValueError(kind)


def _flip_box(box: BoundingBox, kind: str) -> BoundingBox:
    cx, cy, w, h = box.cx, box.cy, box.w, box.h
    if kind == "identity":
        pass
    elif kind == "hflip":
        cx = 1.0 - cx
    elif kind == "vflip":
        cy = 1.0 - cy
    elif kind == "rot180":
        cx, cy = 1.0 - cx, 1.0 - cy
    elif kind == "transpose":
        cx, cy, w, h = cy, cx, h, w
    elif kind == "anti_transpose":
        cx, cy, w, h = 1.0 - cy, 1.0 - cx, h, w
    else:
        raise ValueError(kind)
    return replace(box, cx=cx, cy=cy, w=w, h=h)


def augment(img: ImageBuffer, boxes, op: AugmentOp):
    """Apply one op to a tile and its boxes; returns (image, boxes)."""
    if op.kind in ("transpose", "anti_transpose") and img.width != img.height:
        raise ValueError(f"{op.kind} requires a square tile, got {img.width}x{img.height}")
    pixels = _flip_pixels(img.pixels, op.kind)
    out_boxes = [_flip_box(b, op.kind) for b in boxes]
    if op.scale != 1.0:
        new_w = int(round(img.width * op.scale))
        new_h = int(round(img.height * op.scale))
        out = resample_bicubic(ImageBuffer(np.ascontiguousarray(pixels)), ResampleSpec(new_w, new_h))
    else:
        out = ImageBuffer(np.ascontiguousarray(pixels))
    return out, out_boxes


@dataclass(frozen=True)
class Sample:
    """One labeled tile plus the provenance trail of how it was produced."""

    image: ImageBuffer
    boxes: tuple
    source_id: str
    op_label: str = "original"

    @property
    def provenance(self) -> str:
        return f"{self.source_id}__{self.op_label}"


def expand_dataset(samples, recipe) -> list[Sample]:
    """Cross every sample with every recipe op; |out| = |samples| * |recipe|."""
    recipe = list(recipe)
    if not recipe:
        raise ValueError("augmentation recipe must not be empty")
    out = []
    for sample in samples:
        for op in recipe:
            img, boxes = augment(sample.image, sample.boxes, op)
            out.append(Sample(img, tuple(boxes), sample.source_id, op.label))
    return out
