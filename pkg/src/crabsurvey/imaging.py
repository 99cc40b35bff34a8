"""Raster buffers, PNG I/O, bicubic resampling and the HR->LR degradation model.

Images are stored channel-last (H, W, C) as float64 in [0, 1], with an 8-bit
view in [0, 255] used by the file I/O and the metric modules. All functions
here are pure: buffers are never mutated in place.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Unsupported raster file or pixel layout."""


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x C raster, float64, canonical value range [0, 1]."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected 2- or 3-dim pixel array, got {arr.ndim} dims")
        h, w, c = arr.shape
        if h <= 0 or w <= 0:
            raise ValueError("image dimensions must be positive")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        if not np.isfinite(arr).all():
            raise ValueError("pixel values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "ImageBuffer":
        """Import an 8-bit array; 0..255 maps linearly onto [0, 1]."""
        a = np.asarray(arr)
        if a.dtype != np.uint8:
            raise ValueError(f"expected uint8 input, got {a.dtype}")
        return cls(a.astype(np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        """Export the 8-bit view; exact inverse of ``from_uint8``."""
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def to_gray(self) -> "ImageBuffer":
        """Rec.601 luma; identity for single-channel buffers."""
        if self.channels == 1:
            return self
        y = (
            0.299 * self.pixels[:, :, 0]
            + 0.587 * self.pixels[:, :, 1]
            + 0.114 * self.pixels[:, :, 2]
        )
        return ImageBuffer(np.clip(y, 0.0, 1.0))


def load_image(path) -> ImageBuffer:
    """Load an 8-bit 1- or 3-channel lossless raster file."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image file: {p}")
    with Image.open(p) as im:
        if im.format not in ("PNG", "BMP", "TIFF", "PPM"):
            raise ImageFormatError(f"unsupported (possibly lossy) format: {im.format}")
        if im.mode not in ("L", "RGB"):
            raise ImageFormatError(f"unsupported pixel mode: {im.mode} (need 8-bit L or RGB)")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.size == 0:
        raise ImageFormatError(f"zero-dimension image: {p}")
    return ImageBuffer.from_uint8(arr)


def save_image(img: ImageBuffer, path) -> None:
    """Write the 8-bit view of ``img`` as PNG (or whatever the suffix selects)."""
    arr = img.to_uint8()
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(Path(path))


def encode_png(img: ImageBuffer) -> bytes:
    """PNG payload of the 8-bit view; deterministic for a given Pillow build."""
    arr = img.to_uint8()
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


@dataclass(frozen=True)
class ResampleSpec:
    """Target size plus the cubic-kernel family parameter ``a``."""

    target_width: int
    target_height: int
    kernel_a: float = -0.5

    def __post_init__(self):
        if self.target_width <= 0 or self.target_height <= 0:
            raise ValueError("target dimensions must be positive")
        if not np.isfinite(self.kernel_a):
            raise ValueError("kernel parameter must be finite")


def cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel with free parameter ``a`` (support |t| < 2)."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    out[far] = a * t[far] ** 3 - 5.0 * a * t[far] ** 2 + 8.0 * a * t[far] - 4.0 * a
    return out


def _axis_weights(src_size: int, dst_size: int, a: float):
    """4-tap indices and weights for one axis under half-pixel-center mapping."""
    scale = src_size / dst_size
    centers = (np.arange(dst_size, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(centers).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    weights = cubic_kernel(centers[:, None] - taps, a)
    idx = np.clip(taps, 0, src_size - 1)
    return idx, weights


def _resample_axis(arr: np.ndarray, dst_size: int, a: float, axis: int) -> np.ndarray:
    idx, w = _axis_weights(arr.shape[axis], dst_size, a)
    moved = np.moveaxis(arr, axis, 0)
    gathered = moved[idx]  # (dst, 4, ...)
    out = np.einsum("dt,dt...->d...", w, gathered)
    return np.moveaxis(out, 0, axis)


def resample_bicubic(img: ImageBuffer, spec: ResampleSpec) -> ImageBuffer:
    """Separable cubic-convolution resampling with edge replication.

    Output pixel centers map back to source coordinates via the half-pixel
    convention src = (dst + 0.5) * (src_size / dst_size) - 0.5; the four
    nearest source samples per axis are weighted by the cubic kernel. No
    anti-aliasing prefilter is applied, so the same kernel evaluation holds
    for both up- and downsampling.
    """
    out = _resample_axis(img.pixels, spec.target_height, spec.kernel_a, axis=0)
    out = _resample_axis(out, spec.target_width, spec.kernel_a, axis=1)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def center_crop_divisible(img: ImageBuffer, m: int) -> ImageBuffer:
    """Center-crop to the largest size with both dimensions divisible by m."""
    h = (img.height // m) * m
    w = (img.width // m) * m
    if h == 0 or w == 0:
        raise ValueError(f"image {img.width}x{img.height} too small for factor {m}")
    top = (img.height - h) // 2
    left = (img.width - w) // 2
    return ImageBuffer(img.pixels[top : top + h, left : left + w])


def degrade(hr: ImageBuffer, factor: int, kernel_a: float = -0.5) -> ImageBuffer:
    """HR -> LR degradation: bicubic downsampling by an integer factor >= 2.

    Dimensions not divisible by the factor are center-cropped first so the
    LR/HR pair stays exactly aligned.
    """
    if int(factor) != factor or factor < 2:
        raise ValueError(f"degradation factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    cropped = hr
    if hr.height % factor or hr.width % factor:
        cropped = center_crop_divisible(hr, factor)
    spec = ResampleSpec(cropped.width // factor, cropped.height // factor, kernel_a)
    return resample_bicubic(cropped, spec)


def upsample_bicubic(img: ImageBuffer, factor: int, kernel_a: float = -0.5) -> ImageBuffer:
    """Bicubic upsampling by an integer factor (the non-learned baseline)."""
    if factor < 1:
        raise ValueError("upsampling factor must be >= 1")
    if factor == 1:
        return img
    spec = ResampleSpec(img.width * factor, img.height * factor, kernel_a)
    return resample_bicubic(img, spec)
