from .blocks import ECA, GSConv
from .decode import decode, greedy_nms
from .infer import detect, load_det_checkpoint, save_det_checkpoint
from .model import (
    ABLATION_FLAGS,
    CrabDetector,
    DetectorConfig,
    LevelOutput,
    ablation_lattice,
    build_detector,
)
from .train import DetCheckpoint, DetTrainConfig, detection_loss, train_detector

__all__ = [
    "ECA",
    "GSConv",
    "decode",
    "greedy_nms",
    "detect",
    "load_det_checkpoint",
    "save_det_checkpoint",
    "ABLATION_FLAGS",
    "CrabDetector",
    "DetectorConfig",
    "LevelOutput",
    "ablation_lattice",
    "build_detector",
    "DetCheckpoint",
    "DetTrainConfig",
    "detection_loss",
    "train_detector",
]
