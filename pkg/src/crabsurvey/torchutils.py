"""Small torch helpers shared by the SR and detector stacks."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .imaging import ImageBuffer


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def module_classes(model: nn.Module) -> list[str]:
    """Class names of every submodule; handy for structural assertions."""
    return [m.__class__.__name__ for m in model.modules()]


def image_to_tensor(img: ImageBuffer) -> torch.Tensor:
    """H x W x C buffer -> float32 CHW tensor (copies: buffers are read-only)."""
    return torch.from_numpy(img.pixels.transpose(2, 0, 1).copy()).float()


def tensor_to_image(t: torch.Tensor) -> ImageBuffer:
    """CHW tensor -> buffer, clamped into [0, 1]."""
    arr = t.detach().clamp(0.0, 1.0).cpu().numpy().transpose(1, 2, 0)
    return ImageBuffer(arr.astype(np.float64))
