"""Raw head outputs -> image-space detections.

Per level, cell (i, j) owns the anchor point ((j+0.5)*stride, (i+0.5)*stride);
the head's four distance distributions are reduced to expected left/top/
right/bottom offsets in stride units. Cells whose class probability clears
the confidence threshold become candidate boxes; class-wise greedy NMS keeps
the highest-confidence box of each overlapping cluster. Detections come back
normalized to the image side, sorted by descending confidence.
"""

from __future__ import annotations

import torch

from ..boxes import BoundingBox, from_corners
from ..deteval import iou
from .blocks import DFL
from .model import LevelOutput


def greedy_nms(detections, iou_threshold: float) -> list[BoundingBox]:
    """Class-wise greedy suppression; idempotent; preserves survivors as-is."""
    ordered = sorted(detections, key=lambda d: -d.confidence)
    kept: list[BoundingBox] = []
    for det in ordered:
        suppressed = any(
            k.class_id == det.class_id and iou(k, det) > iou_threshold for k in kept
        )
        if not suppressed:
            kept.append(det)
    return kept


def decode(
    raw_outputs: list[LevelOutput],
    conf_threshold: float = 0.25,
    nms_iou: float = 0.45,
    image_side: int | None = None,
) -> list[BoundingBox]:
    """Decode a single image's raw outputs (batch dimension must be 1)."""
    if not 0.0 < conf_threshold < 1.0 or not 0.0 < nms_iou < 1.0:
        raise ValueError("thresholds must lie in (0, 1)")
    if image_side is None:
        image_side = raw_outputs[0].cls.shape[2] * raw_outputs[0].stride
    side = float(image_side)

    candidates: list[BoundingBox] = []
    with torch.no_grad():
        for level in raw_outputs:
            if level.cls.shape[0] != 1:
                raise ValueError("decode expects a single-image batch")
            stride = float(level.stride)
            b, nc, h, w = level.cls.shape
            reg_max = level.reg.shape[1] // 4
            dfl = DFL(reg_max).to(level.reg.device)

            scores = level.cls.sigmoid()[0]  # (nc, h, w)
            dist = dfl(level.reg.flatten(2))[0].view(4, h, w) * stride  # ltrb, px

            ys, xs = torch.meshgrid(
                torch.arange(h, dtype=torch.float32),
                torch.arange(w, dtype=torch.float32),
                indexing="ij",
            )
            ax = (xs + 0.5) * stride
            ay = (ys + 0.5) * stride
            x1 = (ax - dist[0]).clamp(0.0, side)
            y1 = (ay - dist[1]).clamp(0.0, side)
            x2 = (ax + dist[2]).clamp(0.0, side)
            y2 = (ay + dist[3]).clamp(0.0, side)

            for cid in range(nc):
                mask = scores[cid] > conf_threshold
                if not mask.any():
                    continue
                for conf, bx1, by1, bx2, by2 in zip(
                    scores[cid][mask], x1[mask], y1[mask], x2[mask], y2[mask]
                ):
                    if bx2 - bx1 <= 0 or by2 - by1 <= 0:
                        continue
                    candidates.append(
                        from_corners(
                            cid,
                            float(bx1) / side,
                            float(by1) / side,
                            float(bx2) / side,
                            float(by2) / side,
                            confidence=float(conf),
                        )
                    )
    return greedy_nms(candidates, nms_iou)
