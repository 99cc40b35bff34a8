"""Cross-tile detection merging, density gridding and heatmap rendering.

Detections from overlapping tiles of one frame are remapped into frame
coordinates and deduplicated with class-wise NMS (the higher-confidence
duplicate survives unchanged). The merged set is binned into a per-class
density grid by box center; centers exactly on a cell boundary belong to the
lower-index cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .boxes import CLASS_NAMES, NUM_CLASSES, BoundingBox
from .detector.decode import greedy_nms
from .imaging import ImageBuffer, save_image
from .tiling import TileRecord, remap_box_to_global


def merge_tile_detections(tile_detections, merge_iou: float = 0.5) -> list[BoundingBox]:
    """tile_detections: iterable of (TileRecord, detections-normalized-to-tile)."""
    sources = {tile.source_id for tile, _ in tile_detections}
    if len(sources) > 1:
        raise ValueError(f"tiles reference different source frames: {sorted(sources)}")
    global_boxes = [
        remap_box_to_global(tile, box)
        for tile, boxes in tile_detections
        for box in boxes
    ]
    return greedy_nms(global_boxes, merge_iou)


@dataclass(frozen=True)
class DensityGrid:
    origin: tuple
    cell_size: float
    counts: np.ndarray  # (NUM_CLASSES, rows, cols)

    @property
    def rows(self) -> int:
        return self.counts.shape[1]

    @property
    def cols(self) -> int:
        return self.counts.shape[2]

    def total(self) -> int:
        return int(self.counts.sum())

    def class_total(self, class_id: int) -> int:
        return int(self.counts[class_id].sum())

    def combined(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def _cell_index(coord: float, cell: float, n_cells: int) -> int:
    # boundary centers go to the lower-index cell
    idx = math.ceil(coord / cell) - 1
    return min(max(idx, 0), n_cells - 1)


def build_density_map(
    detections,
    cell_size: float,
    frame_w: float,
    frame_h: float,
    origin=(0.0, 0.0),
) -> DensityGrid:
    """Bin frame-coordinate detections into per-class cell counts."""
    if cell_size <= 0:
        raise ValueError("cell size must be positive")
    cols = max(1, math.ceil(frame_w / cell_size))
    rows = max(1, math.ceil(frame_h / cell_size))
    counts = np.zeros((NUM_CLASSES, rows, cols), dtype=np.int64)
    for det in detections:
        col = _cell_index(det.cx - origin[0], cell_size, cols)
        row = _cell_index(det.cy - origin[1], cell_size, rows)
        counts[det.class_id, row, col] += 1
    return DensityGrid(tuple(origin), float(cell_size), counts)


def ground_sample_distance(altitude_m: float, fov_deg: float, pixel_width: int) -> float:
    """Meters of ground per image pixel for a nadir camera."""
    if altitude_m <= 0 or pixel_width <= 0 or not 0 < fov_deg < 180:
        raise ValueError("need altitude > 0, 0 < fov < 180, pixel_width > 0")
    swath = 2.0 * altitude_m * math.tan(math.radians(fov_deg) / 2.0)
    return swath / pixel_width


# linear white -> yellow -> red ramp for zero .. max count
_RAMP = np.array(
    [
        [1.00, 1.00, 1.00],
        [1.00, 0.85, 0.40],
        [0.95, 0.45, 0.10],
        [0.70, 0.05, 0.05],
    ]
)


def _ramp_colors(norm: np.ndarray) -> np.ndarray:
    stops = np.linspace(0.0, 1.0, len(_RAMP))
    out = np.empty(norm.shape + (3,))
    for c in range(3):
        out[..., c] = np.interp(norm, stops, _RAMP[:, c])
    return out


def render_heatmap(grid: DensityGrid, out_path, pixels_per_cell: int = 16,
                   gsd_m_per_px: float | None = None) -> None:
    """Write a PNG heatmap of total counts plus a sidecar CSV of cell counts.

    The sidecar lives next to the raster as ``<out_path>.csv`` with one row
    per cell: row, col, one column per class, total. When a ground sample
    distance is given, a per-square-meter density column is appended (cell
    side in meters = cell_size * GSD).
    """
    combined = grid.combined().astype(np.float64)
    peak = combined.max()
    norm = combined / peak if peak > 0 else combined
    rgb = _ramp_colors(norm)
    rgb = np.repeat(np.repeat(rgb, pixels_per_cell, axis=0), pixels_per_cell, axis=1)
    save_image(ImageBuffer(rgb), out_path)

    cell_area_m2 = None
    if gsd_m_per_px is not None:
        cell_area_m2 = (grid.cell_size * gsd_m_per_px) ** 2

    with open(f"{out_path}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["row", "col", *CLASS_NAMES, "total"]
        if cell_area_m2 is not None:
            header.append("per_m2")
        writer.writerow(header)
        for r in range(grid.rows):
            for c in range(grid.cols):
                per_class = [int(grid.counts[k, r, c]) for k in range(NUM_CLASSES)]
                row = [r, c, *per_class, int(sum(per_class))]
                if cell_area_m2 is not None:
                    row.append(f"{sum(per_class) / cell_area_m2:.6f}")
                writer.writerow(row)
