import csv
import math

import numpy as np
import pytest

from crabsurvey.boxes import BoundingBox
from crabsurvey.density import (
    DensityGrid,
    build_density_map,
    ground_sample_distance,
    merge_tile_detections,
    render_heatmap,
)
from crabsurvey.imaging import load_image
from crabsurvey.tiling import TileRecord


def det(cid, cx, cy, w, h, conf=0.9):
    return BoundingBox(cid, cx, cy, w, h, confidence=conf)


class TestMerge:
    def test_isolated_detection_survives_unchanged(self):
        tile = TileRecord("f", 0, 0, 100)
        d = det(0, 0.5, 0.5, 0.2, 0.2, 0.77)
        merged = merge_tile_detections([(tile, [d])], 0.5)
        assert len(merged) == 1
        out = merged[0]
        assert (out.cx, out.cy, out.w, out.h) == (50.0, 50.0, 20.0, 20.0)
        assert out.confidence == 0.77 and out.class_id == 0

    def test_cross_tile_duplicate_collapses_to_higher_confidence(self):
        left = TileRecord("f", 0, 0, 100)
        right = TileRecord("f", 50, 0, 100)
        # same object at frame (60, 50): slightly different boxes, IoU ~0.9
        d_left = det(1, 0.60, 0.50, 0.20, 0.20, 0.8)
        d_right = det(1, 0.105, 0.50, 0.21, 0.20, 0.9)
        merged = merge_tile_detections([(left, [d_left]), (right, [d_right])], 0.5)
        assert len(merged) == 1
        assert merged[0].confidence == 0.9

    def test_empty_tiles_empty_result(self):
        tiles = [(TileRecord("f", 0, 0, 64), []), (TileRecord("f", 32, 0, 64), [])]
        assert merge_tile_detections(tiles, 0.5) == []

    def test_mixed_sources_rejected(self):
        a = (TileRecord("frameA", 0, 0, 64), [])
        b = (TileRecord("frameB", 0, 0, 64), [])
        with pytest.raises(ValueError):
            merge_tile_detections([a, b], 0.5)

    def test_never_increases_count_or_edits_survivors(self, rng):
        tiles = []
        total = 0
        for i in range(4):
            rec = TileRecord("f", i * 32, 0, 64)
            dets = [
                det(int(rng.integers(2)), float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)),
                    float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3)), float(rng.uniform(0, 1)))
                for _ in range(int(rng.integers(0, 6)))
            ]
            total += len(dets)
            tiles.append((rec, dets))
        merged = merge_tile_detections(tiles, 0.5)
        assert len(merged) <= total
        all_remapped = {
            (b.class_id, round(b.confidence, 12))
            for rec, dets in tiles
            for b in dets
        }
        for m in merged:
            assert (m.class_id, round(m.confidence, 12)) in all_remapped


class TestDensityGrid:
    def test_five_in_one_cell(self):
        dets = [det(0, 10.0 + i, 10.0, 4.0, 4.0) for i in range(5)]
        grid = build_density_map(dets, 32.0, 64.0, 64.0)
        assert grid.counts[0, 0, 0] == 5
        assert grid.total() == 5

    def test_boundary_center_goes_to_lower_cell(self):
        grid = build_density_map([det(0, 32.0, 10.0, 4.0, 4.0)], 32.0, 64.0, 64.0)
        assert grid.counts[0, 0, 0] == 1  # x = 32 is the 0|1 boundary
        grid2 = build_density_map([det(0, 32.0001, 10.0, 4.0, 4.0)], 32.0, 64.0, 64.0)
        assert grid2.counts[0, 0, 1] == 1

    def test_origin_cell(self):
        grid = build_density_map([det(1, 0.0, 0.0, 2.0, 2.0)], 32.0, 64.0, 64.0)
        assert grid.counts[1, 0, 0] == 1

    def test_random_scatter_is_conserved(self, rng):
        for _ in range(10):
            dets = [
                det(int(rng.integers(2)), float(rng.uniform(0, 640)), float(rng.uniform(0, 480)),
                    5.0, 5.0)
                for _ in range(100)
            ]
            grid = build_density_map(dets, 50.0, 640.0, 480.0)
            assert grid.total() == 100
            assert grid.class_total(0) + grid.class_total(1) == 100

    def test_cell_size_validation(self):
        with pytest.raises(ValueError):
            build_density_map([], 0.0, 64.0, 64.0)


class TestGSD:
    def test_survey_camera(self):
        gsd = ground_sample_distance(5.0, 94.0, 5472)
        assert gsd == pytest.approx(0.00196, abs=2e-5)

    def test_right_angle_fov(self):
        assert ground_sample_distance(7.0, 90.0, 1000) == pytest.approx(14.0 / 1000.0)

    def test_linear_in_altitude(self):
        one = ground_sample_distance(5.0, 94.0, 5472)
        two = ground_sample_distance(10.0, 94.0, 5472)
        assert two == pytest.approx(2 * one)

    def test_domain(self):
        for bad in [(0, 94, 100), (5, 180, 100), (5, 94, 0)]:
            with pytest.raises(ValueError):
                ground_sample_distance(*bad)


class TestHeatmap:
    def test_zero_grid_uniform_raster(self, tmp_path):
        grid = DensityGrid((0.0, 0.0), 32.0, np.zeros((2, 3, 4), dtype=np.int64))
        out = tmp_path / "heat.png"
        render_heatmap(grid, out, pixels_per_cell=4)
        img = load_image(out)
        assert (img.height, img.width) == (12, 16)
        flat = img.pixels.reshape(-1, 3)
        assert np.allclose(flat, flat[0])

    def test_single_hot_cell_block(self, tmp_path):
        counts = np.zeros((2, 2, 2), dtype=np.int64)
        counts[0, 1, 0] = 7
        grid = DensityGrid((0.0, 0.0), 32.0, counts)
        out = tmp_path / "heat.png"
        render_heatmap(grid, out, pixels_per_cell=2)
        img = load_image(out)
        hot = img.pixels[2:4, 0:2]
        cold = img.pixels[0:2, 0:2]
        assert not np.allclose(hot, cold)
        assert np.allclose(cold, 1.0)  # zero cells render as the background end of the ramp

    def test_sidecar_csv_sums(self, tmp_path, rng):
        counts = rng.integers(0, 5, (2, 3, 3))
        grid = DensityGrid((0.0, 0.0), 16.0, counts)
        out = tmp_path / "heat.png"
        render_heatmap(grid, out)
        with open(f"{out}.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert sum(int(r["total"]) for r in rows) == grid.total()
        assert sum(int(r["underwater"]) for r in rows) == grid.class_total(0)
        assert sum(int(r["on_sand"]) for r in rows) == grid.class_total(1)
