"""Task-aligned one-to-few assignment of anchors to ground-truth boxes.

For each ground truth, anchors whose point falls inside the box are candidates;
they are ranked by the alignment metric score^alpha * IoU^beta and the top-k
kept. An anchor claimed by several ground truths goes to the one with the
highest metric. Target class scores are the per-anchor metric rescaled so
each ground truth's best anchor is worth its best IoU.
"""

from __future__ import annotations

import torch

EPS = 1e-9


def pairwise_iou(boxes_a: torch.Tensor, boxes_b: torch.Tensor) -> torch.Tensor:
    """IoU matrix between (N, 4) and (M, 4) xyxy boxes."""
    lt = torch.maximum(boxes_a[:, None, :2], boxes_b[None, :, :2])
    rb = torch.minimum(boxes_a[:, None, 2:], boxes_b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (boxes_a[:, 2] - boxes_a[:, 0]).clamp(min=0) * (boxes_a[:, 3] - boxes_a[:, 1]).clamp(min=0)
    area_b = (boxes_b[:, 2] - boxes_b[:, 0]).clamp(min=0) * (boxes_b[:, 3] - boxes_b[:, 1]).clamp(min=0)
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union.clamp(min=EPS)


def assign_targets(
    anchor_points: torch.Tensor,  # (A, 2) pixel coords
    pred_scores: torch.Tensor,  # (A, nc) probabilities
    pred_boxes: torch.Tensor,  # (A, 4) xyxy pixels
    gt_boxes: torch.Tensor,  # (G, 4) xyxy pixels
    gt_labels: torch.Tensor,  # (G,) long
    num_classes: int,
    topk: int = 10,
    alpha: float = 0.5,
    beta: float = 6.0,
):
    """Returns (target_scores (A, nc), target_boxes (A, 4), fg_mask (A,))."""
    A = anchor_points.shape[0]
    G = gt_boxes.shape[0]
    target_scores = torch.zeros((A, num_classes), dtype=pred_scores.dtype)
    target_boxes = torch.zeros((A, 4), dtype=pred_boxes.dtype)
    fg_mask = torch.zeros(A, dtype=torch.bool)
    if G == 0:
        return target_scores, target_boxes, fg_mask

    lt = anchor_points[:, None, :] - gt_boxes[None, :, :2]
    rb = gt_boxes[None, :, 2:] - anchor_points[:, None, :]
    inside = torch.cat([lt, rb], dim=-1).amin(dim=-1) > EPS  # (A, G)

    ious = pairwise_iou(pred_boxes, gt_boxes)  # (A, G)
    cls_score = pred_scores[:, gt_labels]  # (A, G)
    metric = cls_score.clamp(min=0).pow(alpha) * ious.pow(beta)
    metric = torch.where(inside, metric, torch.zeros_like(metric))

    k = min(topk, A)
    topk_vals, topk_idx = metric.topk(k, dim=0)
    picked = torch.zeros_like(metric, dtype=torch.bool)
    picked.scatter_(0, topk_idx, topk_vals > EPS)

    # an anchor may serve at most one ground truth: best metric wins
    masked_metric = torch.where(picked, metric, torch.zeros_like(metric))
    fg_mask = picked.any(dim=1)
    assigned = masked_metric.argmax(dim=1)  # (A,)

    keep = torch.zeros_like(picked)
    keep[fg_mask, assigned[fg_mask]] = True
    masked_metric = torch.where(keep, metric, torch.zeros_like(metric))
    masked_iou = torch.where(keep, ious, torch.zeros_like(ious))

    per_gt_best_metric = masked_metric.amax(dim=0)  # (G,)
    per_gt_best_iou = masked_iou.amax(dim=0)
    norm = per_gt_best_iou / (per_gt_best_metric + EPS)

    anchor_idx = torch.nonzero(fg_mask, as_tuple=False).squeeze(1)
    gt_idx = assigned[anchor_idx]
    target_boxes[anchor_idx] = gt_boxes[gt_idx]
    target_scores[anchor_idx, gt_labels[gt_idx]] = (
        masked_metric[anchor_idx, gt_idx] * norm[gt_idx]
    ).clamp(max=1.0)
    return target_scores, target_boxes, fg_mask
