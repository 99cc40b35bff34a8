import math

import numpy as np
import pytest

from crabsurvey.imaging import ImageBuffer
from crabsurvey.iqa import (
    IQRecord,
    IQReport,
    psnr,
    score_pairs,
    ssim,
    write_iq_csv,
)
from oracles import brute_force_ssim


def noisy_copy(img: ImageBuffer, rng, sigma255: float) -> ImageBuffer:
    noise = rng.normal(0.0, sigma255 / 255.0, img.pixels.shape)
    return ImageBuffer(np.clip(img.pixels + noise, 0.0, 1.0))


class TestPSNR:
    def test_identical_is_infinite(self, rng):
        img = ImageBuffer(rng.uniform(0, 1, (16, 16, 3)))
        assert psnr(img, img) == math.inf

    def test_uniform_offset_16(self):
        a = ImageBuffer(np.full((20, 20, 1), 100 / 255.0))
        b = ImageBuffer(np.full((20, 20, 1), 116 / 255.0))
        assert psnr(a, b) == pytest.approx(24.05, abs=0.01)
        assert psnr(a, b) == pytest.approx(10 * math.log10(255**2 / 256), abs=1e-9)

    def test_symmetric(self, rng):
        a = ImageBuffer(rng.uniform(0, 1, (12, 14, 3)))
        b = noisy_copy(a, rng, 5)
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_noise_amplitude(self, rng):
        base = ImageBuffer(rng.uniform(0.3, 0.7, (24, 24, 1)))
        values = [psnr(base, noisy_copy(base, rng, amp)) for amp in (2.0, 8.0, 32.0)]
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self, rng):
        a = ImageBuffer(rng.uniform(0, 1, (8, 8, 1)))
        b = ImageBuffer(rng.uniform(0, 1, (8, 9, 1)))
        with pytest.raises(ValueError):
            psnr(a, b)


class TestSSIM:
    def test_identical_is_one(self, rng):
        img = ImageBuffer(rng.uniform(0, 1, (16, 16, 3)))
        assert ssim(img, img) == 1.0

    def test_inverted_checkerboard_nonpositive(self):
        checker = (np.indices((16, 16)).sum(axis=0) % 2).astype(float)
        a = ImageBuffer(checker[:, :, None])
        b = ImageBuffer(1.0 - checker[:, :, None])
        assert ssim(a, b) <= 0.0
        assert ssim(a, b) == pytest.approx(brute_force_ssim(a, b), abs=1e-9)

    def test_symmetric(self, rng):
        a = ImageBuffer(rng.uniform(0, 1, (16, 16, 1)))
        b = noisy_copy(a, rng, 10)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_constant_shift_invariance(self, rng):
        base = ImageBuffer(rng.uniform(100 / 255, 150 / 255, (20, 20, 1)))
        cand = noisy_copy(base, rng, 4)
        before = ssim(base, cand)
        shift = 10 / 255.0
        after = ssim(
            ImageBuffer(base.pixels + shift), ImageBuffer(cand.pixels + shift)
        )
        assert after == pytest.approx(before, abs=1e-3)

    def test_matches_brute_force(self, rng):
        for channels in (1, 3):
            a = ImageBuffer(rng.uniform(0, 1, (14, 13, channels)))
            b = noisy_copy(a, rng, 20)
            assert ssim(a, b) == pytest.approx(brute_force_ssim(a, b), abs=1e-9)

    def test_too_small_image_rejected(self, rng):
        a = ImageBuffer(rng.uniform(0, 1, (8, 8, 1)))
        with pytest.raises(ValueError):
            ssim(a, a)

    def test_luminance_mode(self, rng):
        a = ImageBuffer(rng.uniform(0, 1, (16, 16, 3)))
        b = noisy_copy(a, rng, 8)
        assert ssim(a, b, luminance_only=True) == pytest.approx(
            brute_force_ssim(a.to_gray(), b.to_gray()), abs=1e-9
        )


class TestReport:
    def test_aggregate_is_mean(self, rng):
        imgs = [ImageBuffer(rng.uniform(0, 1, (16, 16, 1))) for _ in range(3)]
        cands = [noisy_copy(i, rng, 6) for i in imgs]
        report = score_pairs(
            [(f"i{k}", imgs[k], cands[k]) for k in range(3)], "bicubic"
        )
        assert report.mean_psnr == pytest.approx(
            np.mean([r.psnr_db for r in report.records])
        )

    def test_csv_layout(self, tmp_path):
        report = IQReport(
            (IQRecord("a", "bicubic", 30.0, 0.9), IQRecord("b", "bicubic", 32.0, 0.95))
        )
        path = tmp_path / "iq.csv"
        write_iq_csv([report], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "image_id,method,psnr_db,ssim"
        assert lines[-1].startswith("__mean__,bicubic,31.000000,0.925000")
