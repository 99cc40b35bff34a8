"""Whole-image detector inference and checkpoint persistence."""

from __future__ import annotations

from pathlib import Path

import torch

from ..imaging import ImageBuffer, ResampleSpec, resample_bicubic
from ..torchutils import image_to_tensor
from .decode import decode
from .model import CrabDetector, DetectorConfig, build_detector
from .train import DetCheckpoint


def detect(model: CrabDetector, img: ImageBuffer, conf_threshold=None, nms_iou=None):
    """Run one image through the detector; detections normalized to the image.

    Inputs that do not match the configured side are resampled bicubically
    first; normalized box coordinates are unaffected by that resize.
    """
    cfg = model.config
    if img.channels != 3:
        raise ValueError("detector expects 3-channel images")
    if img.width != cfg.input_side or img.height != cfg.input_side:
        img = resample_bicubic(img, ResampleSpec(cfg.input_side, cfg.input_side))
    model.eval()
    with torch.no_grad():
        outputs = model(image_to_tensor(img).unsqueeze(0))
    return decode(
        outputs,
        conf_threshold=cfg.conf_threshold if conf_threshold is None else conf_threshold,
        nms_iou=cfg.nms_iou if nms_iou is None else nms_iou,
        image_side=cfg.input_side,
    )


def save_det_checkpoint(ckpt: DetCheckpoint, path) -> None:
    torch.save(
        {
            "fingerprint": ckpt.fingerprint,
            "state_dict": ckpt.state_dict,
            "epoch": ckpt.epoch,
            "loss_history": ckpt.loss_history,
        },
        Path(path),
    )


def load_det_checkpoint(path, config: DetectorConfig):
    payload = torch.load(Path(path), weights_only=False)
    if payload["fingerprint"] != config.fingerprint():
        raise ValueError(
            f"checkpoint fingerprint {payload['fingerprint']!r} does not match config {config.fingerprint()!r}"
        )
    model = build_detector(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    ckpt = DetCheckpoint(
        payload["fingerprint"], payload["state_dict"], payload["epoch"], payload["loss_history"]
    )
    return model, ckpt
