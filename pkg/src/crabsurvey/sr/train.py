"""Training loop and checkpointing for the super-resolution models.

The objective is plain mean-absolute-error between reconstruction and HR
reference (averaged over pixels, channels and batch; for the feedback model,
additionally over its intermediate reconstructions). Optimization uses Adam
with default moments from a configurable initial learning rate, halved every
100 epochs. Training samples fixed-size LR patches (default 40 x 40) with
their aligned m-times-larger HR patches.

Everything is seeded: model-independent patch/batch draws come from a local
numpy generator, torch from ``torch.manual_seed``, so a rerun with the same
seed reproduces the loss history.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import TrainingDivergedError
from ..imaging import ImageBuffer
from ..torchutils import image_to_tensor, tensor_to_image
from .models import SRModelConfig, build_sr_model, forward_final

MAX_EPOCHS_LIMIT = 300


def l1_loss(output: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    if output.shape != reference.shape:
        raise ValueError(f"shape mismatch: {tuple(output.shape)} vs {tuple(reference.shape)}")
    return (output - reference).abs().mean()


@dataclass(frozen=True)
class SRTrainConfig:
    max_epochs: int = 200
    batch_size: int = 16
    initial_learning_rate: float = 1e-4
    lr_patch: int = 40
    seed: int = 0
    lr_halving_epochs: int = 100

    def __post_init__(self):
        if not 0 < self.max_epochs <= MAX_EPOCHS_LIMIT:
            raise ValueError(f"max_epochs must lie in 1..{MAX_EPOCHS_LIMIT}")
        if self.batch_size <= 0 or self.lr_patch <= 0 or self.lr_halving_epochs <= 0:
            raise ValueError("batch_size, lr_patch and lr_halving_epochs must be positive")
        if self.initial_learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")


@dataclass
class Checkpoint:
    fingerprint: str
    state_dict: dict
    epoch: int
    loss_history: list = field(default_factory=list)


def _validate_pairs(pairs, magnification: int):
    if not pairs:
        raise ValueError("empty training set")
    for lr, hr in pairs:
        if (hr.height, hr.width) != (lr.height * magnification, lr.width * magnification):
            raise ValueError(
                f"pair shapes {lr.width}x{lr.height} -> {hr.width}x{hr.height} "
                f"do not satisfy HR = {magnification} x LR"
            )
        if hr.channels != lr.channels:
            raise ValueError("LR/HR channel mismatch")


def _crop_batch(lr_tensors, hr_tensors, indices, patch, m, rng):
    """Random aligned patch per selected pair; an epoch visits each pair once."""
    lrs, hrs = [], []
    for i in indices:
        lr, hr = lr_tensors[i], hr_tensors[i]
        y = int(rng.integers(lr.shape[1] - patch + 1))
        x = int(rng.integers(lr.shape[2] - patch + 1))
        lrs.append(lr[:, y : y + patch, x : x + patch])
        hrs.append(hr[:, m * y : m * (y + patch), m * x : m * (x + patch)])
    return torch.stack(lrs), torch.stack(hrs)


def _step_loss(model, lr_batch, hr_batch) -> torch.Tensor:
    out = model(lr_batch)
    if isinstance(out, list):
        return torch.stack([l1_loss(o, hr_batch) for o in out]).mean()
    return l1_loss(out, hr_batch)


def train_sr(model, paired_dataset, cfg: SRTrainConfig, log_path=None) -> Checkpoint:
    """Optimize ``model`` on (LR, HR) ImageBuffer pairs; returns a checkpoint."""
    config: SRModelConfig = model.config
    m = config.magnification
    _validate_pairs(paired_dataset, m)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    lr_tensors = [image_to_tensor(lr) for lr, _ in paired_dataset]
    hr_tensors = [image_to_tensor(hr) for _, hr in paired_dataset]
    patch = min([cfg.lr_patch] + [min(t.shape[1], t.shape[2]) for t in lr_tensors])

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.initial_learning_rate)
    scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=cfg.lr_halving_epochs, gamma=0.5)
    n = len(paired_dataset)
    batches_per_epoch = max(1, math.ceil(n / cfg.batch_size))

    history = []
    model.train()
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for bi in range(batches_per_epoch):
            indices = order[bi * cfg.batch_size : (bi + 1) * cfg.batch_size]
            if indices.size == 0:
                indices = order[:1]
            lr_batch, hr_batch = _crop_batch(lr_tensors, hr_tensors, indices, patch, m, rng)
            optimizer.zero_grad()
            loss = _step_loss(model, lr_batch, hr_batch)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        scheduler.step()
        history.append(float(np.mean(epoch_losses)))

    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_L1"])
            for i, v in enumerate(history):
                writer.writerow([i, f"{v:.8f}"])

    model.eval()
    return Checkpoint(config.fingerprint(), model.state_dict(), cfg.max_epochs, history)


def reconstruct(model, lr_img: ImageBuffer) -> ImageBuffer:
    """Run one LR image through the model; output clamped to [0, 1]."""
    if lr_img.channels != model.config.channels:
        raise ValueError(
            f"channel mismatch: model expects {model.config.channels}, image has {lr_img.channels}"
        )
    model.eval()
    with torch.no_grad():
        out = forward_final(model, image_to_tensor(lr_img).unsqueeze(0))
    return tensor_to_image(out[0])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    torch.save(
        {
            "fingerprint": ckpt.fingerprint,
            "state_dict": ckpt.state_dict,
            "epoch": ckpt.epoch,
            "loss_history": ckpt.loss_history,
        },
        Path(path),
    )


def load_checkpoint(path, config: SRModelConfig):
    """Rebuild the model a checkpoint was trained with; fingerprints must match."""
    payload = torch.load(Path(path), weights_only=False)
    if payload["fingerprint"] != config.fingerprint():
        raise ValueError(
            f"checkpoint fingerprint {payload['fingerprint']!r} does not match config {config.fingerprint()!r}"
        )
    model = build_sr_model(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, Checkpoint(payload["fingerprint"], payload["state_dict"], payload["epoch"], payload["loss_history"])
