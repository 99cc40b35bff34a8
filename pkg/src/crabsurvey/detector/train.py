"""Detector objective and training loop.

The loss is the weighted sum of three terms computed against task-aligned
targets: per-class binary cross-entropy on the classification logits,
complete-IoU loss on the decoded boxes of assigned anchors, and a
distribution-focal term tying the distance bins to the true box sides. The
default weights (box 7.5, cls 0.5, dfl 1.5) are pinned in the train config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import TrainingDivergedError
from ..torchutils import image_to_tensor
from .assign import assign_targets
from .blocks import DFL
from .model import CrabDetector, LevelOutput


@dataclass(frozen=True)
class DetTrainConfig:
    max_epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    box_gain: float = 7.5
    cls_gain: float = 0.5
    dfl_gain: float = 1.5
    assign_topk: int = 10

    def __post_init__(self):
        if self.max_epochs <= 0 or self.batch_size <= 0:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")


@dataclass
class DetCheckpoint:
    fingerprint: str
    state_dict: dict
    epoch: int
    loss_history: list = field(default_factory=list)


def make_anchors(outputs: list[LevelOutput]):
    """Anchor points (A, 2) and per-anchor strides (A,) across all levels."""
    points, strides = [], []
    for level in outputs:
        _, _, h, w = level.cls.shape
        ys, xs = torch.meshgrid(
            torch.arange(h, dtype=torch.float32),
            torch.arange(w, dtype=torch.float32),
            indexing="ij",
        )
        pts = torch.stack([(xs + 0.5) * level.stride, (ys + 0.5) * level.stride], dim=-1)
        points.append(pts.reshape(-1, 2))
        strides.append(torch.full((h * w,), float(level.stride)))
    return torch.cat(points), torch.cat(strides)


def _flatten_outputs(outputs: list[LevelOutput]):
    cls = torch.cat([o.cls.flatten(2) for o in outputs], dim=2)  # (B, nc, A)
    reg = torch.cat([o.reg.flatten(2) for o in outputs], dim=2)  # (B, 4*reg_max, A)
    return cls.permute(0, 2, 1), reg.permute(0, 2, 1)  # (B, A, nc), (B, A, 4*reg_max)


def _ciou(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Complete IoU between aligned (N, 4) xyxy boxes."""
    eps = 1e-9
    lt = torch.maximum(pred[:, :2], target[:, :2])
    rb = torch.minimum(pred[:, 2:], target[:, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[:, 0] * wh[:, 1]
    area_p = (pred[:, 2] - pred[:, 0]).clamp(min=0) * (pred[:, 3] - pred[:, 1]).clamp(min=0)
    area_t = (target[:, 2] - target[:, 0]) * (target[:, 3] - target[:, 1])
    union = area_p + area_t - inter
    iou = inter / union.clamp(min=eps)

    # enclosing box diagonal and center distance
    enc_lt = torch.minimum(pred[:, :2], target[:, :2])
    enc_rb = torch.maximum(pred[:, 2:], target[:, 2:])
    enc_diag = ((enc_rb - enc_lt) ** 2).sum(dim=1).clamp(min=eps)
    center_p = (pred[:, :2] + pred[:, 2:]) / 2
    center_t = (target[:, :2] + target[:, 2:]) / 2
    center_dist = ((center_p - center_t) ** 2).sum(dim=1)

    wp = (pred[:, 2] - pred[:, 0]).clamp(min=eps)
    hp = (pred[:, 3] - pred[:, 1]).clamp(min=eps)
    wt = (target[:, 2] - target[:, 0]).clamp(min=eps)
    ht = (target[:, 3] - target[:, 1]).clamp(min=eps)
    v = (4.0 / math.pi**2) * (torch.atan(wt / ht) - torch.atan(wp / hp)) ** 2
    with torch.no_grad():
        a = v / (1.0 - iou + v + eps)
    return iou - center_dist / enc_diag - a * v


def _dfl_loss(reg_logits: torch.Tensor, target_dist: torch.Tensor, reg_max: int) -> torch.Tensor:
    """reg_logits (N, 4, reg_max), target_dist (N, 4) in stride units."""
    t = target_dist.clamp(0, reg_max - 1 - 1e-3)
    tl = t.floor().long()
    tr = tl + 1
    wl = tr.float() - t
    wr = t - tl.float()
    logp = reg_logits.log_softmax(dim=-1)
    loss_l = -logp.gather(-1, tl.unsqueeze(-1)).squeeze(-1) * wl
    loss_r = -logp.gather(-1, tr.clamp(max=reg_max - 1).unsqueeze(-1)).squeeze(-1) * wr
    return (loss_l + loss_r).mean(dim=1)


def detection_loss(
    model: CrabDetector,
    outputs: list[LevelOutput],
    gt_per_image: list,  # each (G, 5): class, x1, y1, x2, y2 in pixels
    cfg: DetTrainConfig,
) -> torch.Tensor:
    nc = model.config.num_classes
    reg_max = model.config.reg_max
    anchor_points, strides = make_anchors(outputs)
    pred_cls, pred_reg = _flatten_outputs(outputs)
    batch = pred_cls.shape[0]
    dfl = DFL(reg_max)

    total_cls = pred_cls.new_zeros(())
    total_box = pred_cls.new_zeros(())
    total_dfl = pred_cls.new_zeros(())
    for b in range(batch):
        cls_logits = pred_cls[b]  # (A, nc)
        reg_logits = pred_reg[b]  # (A, 4*reg_max)
        dist = dfl(reg_logits.t().unsqueeze(0)).squeeze(0).t() * strides[:, None]  # (A, 4) px
        boxes = torch.cat(
            [anchor_points - dist[:, :2], anchor_points + dist[:, 2:]], dim=1
        )
        gt = gt_per_image[b]
        with torch.no_grad():
            target_scores, target_boxes, fg = assign_targets(
                anchor_points,
                cls_logits.sigmoid(),
                boxes,
                gt[:, 1:],
                gt[:, 0].long(),
                nc,
                topk=cfg.assign_topk,
            )
        score_sum = target_scores.sum().clamp(min=1.0)
        total_cls = total_cls + (
            F.binary_cross_entropy_with_logits(cls_logits, target_scores, reduction="sum")
            / score_sum
        )
        if fg.any():
            weight = target_scores[fg].sum(dim=1)
            ciou = _ciou(boxes[fg], target_boxes[fg])
            total_box = total_box + ((1.0 - ciou) * weight).sum() / score_sum
            target_dist = torch.cat(
                [
                    anchor_points[fg] - target_boxes[fg][:, :2],
                    target_boxes[fg][:, 2:] - anchor_points[fg],
                ],
                dim=1,
            ) / strides[fg][:, None]
            dfl_term = _dfl_loss(reg_logits[fg].view(-1, 4, reg_max), target_dist, reg_max)
            total_dfl = total_dfl + (dfl_term * weight).sum() / score_sum
    scale = 1.0 / batch
    return scale * (
        cfg.box_gain * total_box + cfg.cls_gain * total_cls + cfg.dfl_gain * total_dfl
    )


def boxes_to_tensor(boxes, side: int) -> torch.Tensor:
    """Normalized boxes -> (G, 5) tensor of class and pixel corners."""
    rows = []
    for b in boxes:
        x1, y1, x2, y2 = b.corners()
        rows.append([float(b.class_id), x1 * side, y1 * side, x2 * side, y2 * side])
    if not rows:
        return torch.zeros((0, 5))
    return torch.tensor(rows, dtype=torch.float32)


def train_detector(model: CrabDetector, dataset, cfg: DetTrainConfig, log_path=None) -> DetCheckpoint:
    """dataset: list of (ImageBuffer, boxes) tiles sized to the config's input side."""
    if not dataset:
        raise ValueError("empty training set")
    side = model.config.input_side
    for img, boxes in dataset:
        if img.width != side or img.height != side:
            raise ValueError(f"tile {img.width}x{img.height} does not match input side {side}")
        for box in boxes:
            if box.w <= 0 or box.h <= 0:
                raise ValueError("degenerate ground-truth box")

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    images = torch.stack([image_to_tensor(img) for img, _ in dataset])
    gts = [boxes_to_tensor(boxes, side) for _, boxes in dataset]

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    n = len(dataset)
    batches_per_epoch = max(1, math.ceil(n / cfg.batch_size))

    history = []
    model.train()
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for bi in range(batches_per_epoch):
            idx = order[bi * cfg.batch_size : (bi + 1) * cfg.batch_size]
            if idx.size == 0:
                idx = order[:1]
            outputs = model(images[idx])
            loss = detection_loss(model, outputs, [gts[i] for i in idx], cfg)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite detector loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        history.append(float(np.mean(epoch_losses)))

    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for i, v in enumerate(history):
                writer.writerow([i, f"{v:.8f}"])

    model.eval()
    return DetCheckpoint(model.config.fingerprint(), model.state_dict(), cfg.max_epochs, history)
