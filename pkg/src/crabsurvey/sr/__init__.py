from .models import (
    ARCHITECTURES,
    PRESETS,
    SRModelConfig,
    build_sr_model,
    count_parameters,
    preset_config,
)
from .train import Checkpoint, SRTrainConfig, l1_loss, load_checkpoint, reconstruct, save_checkpoint, train_sr

__all__ = [
    "ARCHITECTURES",
    "PRESETS",
    "SRModelConfig",
    "build_sr_model",
    "count_parameters",
    "preset_config",
    "Checkpoint",
    "SRTrainConfig",
    "l1_loss",
    "load_checkpoint",
    "reconstruct",
    "save_checkpoint",
    "train_sr",
]
