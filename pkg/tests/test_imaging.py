import numpy as np
import pytest
from PIL import Image

from crabsurvey.imaging import (
    ImageBuffer,
    ImageFormatError,
    ResampleSpec,
    center_crop_divisible,
    cubic_kernel,
    degrade,
    encode_png,
    load_image,
    resample_bicubic,
    save_image,
    upsample_bicubic,
)


def reference_bicubic(pixels, dst_h, dst_w, a=-0.5):
    """Scalar evaluation of the separable cubic kernel at output coordinates."""
    src_h, src_w, ch = pixels.shape
    tmp = np.zeros((dst_h, src_w, ch))
    for i in range(dst_h):
        center = (i + 0.5) * src_h / dst_h - 0.5
        base = int(np.floor(center))
        for c in range(ch):
            for j in range(src_w):
                acc = 0.0
                for t in range(-1, 3):
                    idx = min(max(base + t, 0), src_h - 1)
                    acc += float(cubic_kernel(np.array([center - (base + t)]), a)[0]) * pixels[idx, j, c]
                tmp[i, j, c] = acc
    out = np.zeros((dst_h, dst_w, ch))
    for j in range(dst_w):
        center = (j + 0.5) * src_w / dst_w - 0.5
        base = int(np.floor(center))
        for c in range(ch):
            for i in range(dst_h):
                acc = 0.0
                for t in range(-1, 3):
                    idx = min(max(base + t, 0), src_w - 1)
                    acc += float(cubic_kernel(np.array([center - (base + t)]), a)[0]) * tmp[i, idx, c]
                out[i, j, c] = acc
    return np.clip(out, 0.0, 1.0)


class TestImageBuffer:
    def test_validates_range(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.full((2, 2, 1), 1.5))
        with pytest.raises(ValueError):
            ImageBuffer(np.full((2, 2, 1), -0.1))

    def test_validates_channels(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((2, 2, 4)))

    def test_2d_promoted_to_single_channel(self):
        img = ImageBuffer(np.zeros((3, 4)))
        assert (img.height, img.width, img.channels) == (3, 4, 1)

    def test_uint8_roundtrip_exact(self):
        arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
        img = ImageBuffer.from_uint8(arr)
        assert img.pixels.max() == 1.0 and img.pixels.min() == 0.0
        np.testing.assert_array_equal(img.to_uint8()[:, :, 0], arr)


class TestIO:
    def test_black_file_loads_as_zeros(self, tmp_path):
        path = tmp_path / "black.png"
        Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(path)
        img = load_image(path)
        assert img.pixels.sum() == 0.0

    def test_white_file_loads_as_ones(self, tmp_path):
        path = tmp_path / "white.png"
        Image.fromarray(np.full((2, 2, 3), 255, dtype=np.uint8)).save(path)
        img = load_image(path)
        assert (img.pixels == 1.0).all()

    def test_export_load_roundtrip_byte_identical(self, tmp_path, rng):
        img = ImageBuffer.from_uint8(rng.integers(0, 256, (13, 9, 3), dtype=np.uint8))
        path = tmp_path / "x.png"
        save_image(img, path)
        assert encode_png(load_image(path)) == path.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_lossy_format_rejected(self, tmp_path, rng):
        path = tmp_path / "x.jpg"
        Image.fromarray(rng.integers(0, 255, (8, 8, 3), dtype=np.uint8)).save(path)
        with pytest.raises(ImageFormatError):
            load_image(path)

    def test_unsupported_mode_rejected(self, tmp_path):
        path = tmp_path / "rgba.png"
        Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8), mode="RGBA").save(path)
        with pytest.raises(ImageFormatError):
            load_image(path)


class TestResample:
    def test_constant_stays_constant(self):
        img = ImageBuffer(np.full((8, 6, 3), 0.5))
        out = resample_bicubic(img, ResampleSpec(17, 11))
        np.testing.assert_allclose(out.pixels, 0.5, atol=1e-12)

    def test_640_to_160(self, rng):
        img = ImageBuffer(rng.uniform(0, 1, (640, 640, 1)))
        out = resample_bicubic(img, ResampleSpec(160, 160))
        assert (out.width, out.height) == (160, 160)

    def test_identity_resample_exact(self, rng):
        img = ImageBuffer(rng.uniform(0, 1, (11, 7, 3)))
        out = resample_bicubic(img, ResampleSpec(7, 11))
        np.testing.assert_allclose(out.pixels, img.pixels, atol=1e-12)

    def test_matches_scalar_reference_on_ramp(self):
        ramp = np.linspace(0.1, 0.9, 16).reshape(4, 4)[:, :, None]
        img = ImageBuffer(ramp)
        out = resample_bicubic(img, ResampleSpec(2, 2))
        np.testing.assert_allclose(out.pixels, reference_bicubic(ramp, 2, 2), atol=1e-12)

    def test_matches_scalar_reference_random(self, rng):
        pixels = rng.uniform(0.1, 0.9, (7, 5, 3))
        out = resample_bicubic(ImageBuffer(pixels), ResampleSpec(9, 4))
        np.testing.assert_allclose(out.pixels, reference_bicubic(pixels, 4, 9), atol=1e-12)

    def test_outputs_clamped(self, rng):
        # sharp checker drives cubic overshoot past [0, 1] before the clamp
        checker = np.indices((12, 12)).sum(axis=0) % 2
        img = ImageBuffer(checker[:, :, None].astype(float))
        out = resample_bicubic(img, ResampleSpec(30, 30))
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


class TestDegrade:
    def test_640_by_4(self, rng):
        hr = ImageBuffer(rng.uniform(0, 1, (640, 640, 3)))
        assert (degrade(hr, 4).width, degrade(hr, 4).height) == (160, 160)

    def test_640_by_2(self, rng):
        hr = ImageBuffer(rng.uniform(0, 1, (640, 640, 1)))
        lr = degrade(hr, 2)
        assert (lr.width, lr.height) == (320, 320)

    def test_constant_preserved(self):
        hr = ImageBuffer(np.full((12, 12, 3), 0.25))
        for m in (2, 3, 4):
            np.testing.assert_allclose(degrade(hr, m).pixels, 0.25, atol=1e-12)

    @pytest.mark.parametrize("m", [0, 1, -3])
    def test_rejects_small_factor(self, m):
        hr = ImageBuffer(np.zeros((8, 8, 1)))
        with pytest.raises(ValueError):
            degrade(hr, m)

    def test_center_crop_on_indivisible(self, rng):
        hr = ImageBuffer(rng.uniform(0, 1, (13, 11, 1)))
        lr = degrade(hr, 4)
        assert (lr.height, lr.width) == (3, 2)
        cropped = center_crop_divisible(hr, 4)
        assert (cropped.height, cropped.width) == (12, 8)

    def test_lowpass_mean_consistency(self, rng):
        hr = ImageBuffer(rng.uniform(0.2, 0.8, (128, 128, 3)))
        for m in (2, 4):
            up = upsample_bicubic(degrade(hr, m), m)
            assert abs(up.pixels.mean() - hr.pixels.mean()) < 1.0 / 255.0
