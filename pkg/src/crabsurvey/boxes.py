"""Class-tagged, confidence-bearing bounding boxes and their text-file formats.

Boxes are axis-aligned and stored center-normalized: (cx, cy, w, h) relative
to the side of whatever canvas they live on (a tile or a full frame). Class 0
is an underwater hermit crab, class 1 a hermit crab on sand. Ground-truth
boxes carry confidence 1.0.

Label file: one box per line, "class_id cx cy w h".
Prediction dump: one detection per line, "class_id cx cy w h confidence".
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

CLASS_NAMES = ("underwater", "on_sand")
NUM_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class BoundingBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.class_id not in range(NUM_CLASSES):
            raise ValueError(f"class_id must be in 0..{NUM_CLASSES - 1}, got {self.class_id}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive, got w={self.w} h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) in the same units as the center coordinates."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    def area(self) -> float:
        return self.w * self.h

    def with_confidence(self, confidence: float) -> "BoundingBox":
        return replace(self, confidence=confidence)


def from_corners(class_id, x1, y1, x2, y2, confidence=1.0) -> BoundingBox:
    return BoundingBox(
        class_id=class_id,
        cx=(x1 + x2) / 2.0,
        cy=(y1 + y2) / 2.0,
        w=x2 - x1,
        h=y2 - y1,
        confidence=confidence,
    )


def clip_unit(box: BoundingBox) -> BoundingBox | None:
    """Clip a normalized box to the unit square; None if nothing remains."""
    x1, y1, x2, y2 = box.corners()
    x1, y1 = max(x1, 0.0), max(y1, 0.0)
    x2, y2 = min(x2, 1.0), min(y2, 1.0)
    if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
        return None
    return from_corners(box.class_id, x1, y1, x2, y2, box.confidence)


def read_labels(path) -> list[BoundingBox]:
    """Parse a ground-truth label file (confidence fixed at 1.0)."""
    out = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 5:
            raise ValueError(f"{path}:{line_no}: expected 5 fields, got {len(parts)}")
        cid = int(parts[0])
        cx, cy, w, h = (float(v) for v in parts[1:])
        out.append(BoundingBox(cid, cx, cy, w, h))
    return out


def write_labels(boxes, path) -> None:
    lines = [f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}" for b in boxes]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_predictions(path) -> list[BoundingBox]:
    """Parse a prediction dump (same layout as labels plus a confidence column)."""
    out = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 6:
            raise ValueError(f"{path}:{line_no}: expected 6 fields, got {len(parts)}")
        cid = int(parts[0])
        cx, cy, w, h, conf = (float(v) for v in parts[1:])
        out.append(BoundingBox(cid, cx, cy, w, h, confidence=conf))
    return out


def write_predictions(boxes, path) -> None:
    lines = [
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f} {b.confidence:.6f}"
        for b in boxes
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
