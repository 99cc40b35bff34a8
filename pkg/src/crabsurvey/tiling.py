"""Sliding-window tiling of survey frames and tile<->frame coordinate mapping.

Tile planning is pure arithmetic and fully deterministic: offsets run
0, stride, 2*stride, ... per axis, row-major ordering. Under ``drop_partial``
windows that would overhang the frame are discarded (training mode); under
``pad_reflect`` the final window per axis is shifted flush to the frame edge,
or reflection-padded when the frame is smaller than the window, so every
frame pixel is covered (inference mode).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox, clip_unit, from_corners
from .imaging import ImageBuffer

DROP_PARTIAL = "drop_partial"
PAD_REFLECT = "pad_reflect"

# clipped boxes keeping less than this fraction of their original area are
# dropped from the tile's labels
MIN_CLIPPED_AREA_RATIO = 0.2


@dataclass(frozen=True)
class TileGrid:
    window: int
    stride: int
    edge_policy: str = DROP_PARTIAL

    def __post_init__(self):
        if not 0 < self.stride <= self.window:
            raise ValueError(f"need 0 < stride <= window, got stride={self.stride} window={self.window}")
        if self.edge_policy not in (DROP_PARTIAL, PAD_REFLECT):
            raise ValueError(f"unknown edge policy: {self.edge_policy}")


@dataclass(frozen=True)
class TileRecord:
    source_id: str
    x0: int
    y0: int
    side: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("tile offsets must be nonnegative")
        if self.side <= 0:
            raise ValueError("tile side must be positive")


def _axis_offsets(dim: int, window: int, stride: int, policy: str) -> list[int]:
    if policy == DROP_PARTIAL:
        if dim < window:
            raise ValueError(f"frame extent {dim} smaller than window {window} under {policy}")
        count = (dim - window) // stride + 1
        return [i * stride for i in range(count)]
    if dim <= window:
        return [0]
    offsets = list(range(0, dim - window, stride))
    offsets.append(dim - window)
    return offsets


def plan_tiles(frame_w: int, frame_h: int, grid: TileGrid, source_id: str = "frame") -> list[TileRecord]:
    """Row-major tile plan for a frame of the given size."""
    xs = _axis_offsets(frame_w, grid.window, grid.stride, grid.edge_policy)
    ys = _axis_offsets(frame_h, grid.window, grid.stride, grid.edge_policy)
    return [TileRecord(source_id, x, y, grid.window) for y in ys for x in xs]


def extract_tile(frame: ImageBuffer, tile: TileRecord) -> ImageBuffer:
    """Cut the tile out of the frame, reflect-padding any overhang."""
    y1, x1 = tile.y0, tile.x0
    y2, x2 = y1 + tile.side, x1 + tile.side
    patch = frame.pixels[y1 : min(y2, frame.height), x1 : min(x2, frame.width)]
    pad_y = tile.side - patch.shape[0]
    pad_x = tile.side - patch.shape[1]
    if pad_y or pad_x:
        patch = np.pad(patch, ((0, pad_y), (0, pad_x), (0, 0)), mode="reflect")
    return ImageBuffer(patch)


def frame_boxes_to_tile(frame_boxes, tile: TileRecord,
                        min_area_ratio: float = MIN_CLIPPED_AREA_RATIO) -> list[BoundingBox]:
    """Re-express frame-pixel boxes in tile-normalized coordinates.

    Boxes are clipped to the tile; a clipped box keeping less than
    ``min_area_ratio`` of its original area is dropped.
    """
    out = []
    for b in frame_boxes:
        x1, y1, x2, y2 = b.corners()
        local = from_corners(
            b.class_id,
            (x1 - tile.x0) / tile.side,
            (y1 - tile.y0) / tile.side,
            (x2 - tile.x0) / tile.side,
            (y2 - tile.y0) / tile.side,
            b.confidence,
        )
        clipped = clip_unit(local)
        if clipped is None:
            continue
        if clipped.area() < min_area_ratio * local.area():
            continue
        out.append(clipped)
    return out


def remap_box_to_global(tile: TileRecord, box: BoundingBox) -> BoundingBox:
    """Tile-normalized box -> frame-pixel box; class and confidence preserved."""
    return BoundingBox(
        class_id=box.class_id,
        cx=tile.x0 + box.cx * tile.side,
        cy=tile.y0 + box.cy * tile.side,
        w=box.w * tile.side,
        h=box.h * tile.side,
        confidence=box.confidence,
    )


def normalize_box_to_tile(tile: TileRecord, box: BoundingBox) -> BoundingBox:
    """Inverse of :func:`remap_box_to_global`."""
    return BoundingBox(
        class_id=box.class_id,
        cx=(box.cx - tile.x0) / tile.side,
        cy=(box.cy - tile.y0) / tile.side,
        w=box.w / tile.side,
        h=box.h / tile.side,
        confidence=box.confidence,
    )


MANIFEST_FIELDS = ("source_id", "x0", "y0", "side", "tile_path")


def write_tile_manifest(rows, path) -> None:
    """rows: iterable of (TileRecord, tile_path)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for tile, tile_path in rows:
            writer.writerow([tile.source_id, tile.x0, tile.y0, tile.side, str(tile_path)])


def read_tile_manifest(path) -> list[tuple[TileRecord, str]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise ValueError(f"bad tile manifest header in {path}: {reader.fieldnames}")
        for row in reader:
            tile = TileRecord(row["source_id"], int(row["x0"]), int(row["y0"]), int(row["side"]))
            out.append((tile, row["tile_path"]))
    return out
