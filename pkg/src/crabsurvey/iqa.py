"""Image-quality metrics for scoring reconstructions against HR references.

Both metrics run on the 8-bit scale (values in [0, 1] are multiplied by 255,
no re-quantization): PSNR uses MAX = 255 with MSE pooled over every element;
SSIM uses an 11x11 Gaussian window (sigma 1.5, stride 1, windows fully inside
the image), stability constants C1 = (0.01*255)^2 and C2 = (0.03*255)^2,
computed per channel and then averaged. A luminance-only mode converts both
images to Rec.601 luma first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .imaging import ImageBuffer

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255.0) ** 2
C2 = (0.03 * 255.0) ** 2


def _check_pair(reference: ImageBuffer, candidate: ImageBuffer):
    if reference.pixels.shape != candidate.pixels.shape:
        raise ValueError(
            f"shape mismatch: reference {reference.pixels.shape} vs candidate {candidate.pixels.shape}"
        )


def psnr(reference: ImageBuffer, candidate: ImageBuffer, luminance_only: bool = False) -> float:
    """Peak signal-to-noise ratio in dB; math.inf when the images are identical."""
    _check_pair(reference, candidate)
    if luminance_only:
        reference, candidate = reference.to_gray(), candidate.to_gray()
    diff = (reference.pixels - candidate.pixels) * 255.0
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is the outer product."""
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _window_means(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Valid-mode separable correlation with the (outer-product) window."""
    v = np.lib.stride_tricks.sliding_window_view(plane, taps.size, axis=0) @ taps
    return np.lib.stride_tricks.sliding_window_view(v, taps.size, axis=1) @ taps


def _ssim_plane(ref: np.ndarray, cand: np.ndarray, taps: np.ndarray) -> float:
    mu_x = _window_means(ref, taps)
    mu_y = _window_means(cand, taps)
    var_x = _window_means(ref * ref, taps) - mu_x * mu_x
    var_y = _window_means(cand * cand, taps) - mu_y * mu_y
    cov = _window_means(ref * cand, taps) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + C1) * (2.0 * cov + C2)
    den = (mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2)
    return float(np.mean(num / den))


def ssim(reference: ImageBuffer, candidate: ImageBuffer, luminance_only: bool = False) -> float:
    """Mean local structural similarity; 1.0 iff the images are identical."""
    _check_pair(reference, candidate)
    if luminance_only:
        reference, candidate = reference.to_gray(), candidate.to_gray()
    if min(reference.height, reference.width) < SSIM_WINDOW:
        raise ValueError(
            f"image {reference.width}x{reference.height} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    taps = gaussian_window()
    ref = reference.pixels * 255.0
    cand = candidate.pixels * 255.0
    per_channel = [
        _ssim_plane(ref[:, :, c], cand[:, :, c], taps) for c in range(reference.channels)
    ]
    return float(np.mean(per_channel))


@dataclass(frozen=True)
class IQRecord:
    image_id: str
    method: str
    psnr_db: float
    ssim: float


@dataclass(frozen=True)
class IQReport:
    """Per-image scores for one method plus their arithmetic means."""

    records: tuple

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.records]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.records]))


def score_pairs(pairs, method: str, luminance_only: bool = False) -> IQReport:
    """pairs: iterable of (image_id, reference, candidate)."""
    records = tuple(
        IQRecord(image_id, method, psnr(ref, cand, luminance_only), ssim(ref, cand, luminance_only))
        for image_id, ref, cand in pairs
    )
    if not records:
        raise ValueError("no image pairs to score")
    return IQReport(records)


def write_iq_csv(reports, path) -> None:
    """One row per image per method, plus an aggregate row per method."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "method", "psnr_db", "ssim"])
        for report in reports:
            for r in report.records:
                writer.writerow([r.image_id, r.method, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}"])
            writer.writerow(
                ["__mean__", report.records[0].method, f"{report.mean_psnr:.6f}", f"{report.mean_ssim:.6f}"]
            )
