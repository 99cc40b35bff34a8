"""Declarative run configuration: defaults for every pinned convention,
shallow-merged with an optional YAML file."""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULT_CONFIG = {
    "seed": 0,
    "tiling": {
        "window": 640,
        "stride": 320,
        "edge_policy_train": "drop_partial",
        "edge_policy_infer": "pad_reflect",
        "min_clipped_area_ratio": 0.2,
    },
    "augment": {
        "geometric": ["identity", "hflip", "vflip", "rot180", "transpose", "anti_transpose"],
        "scales": [1.0, 0.6, 0.7, 0.8, 0.9],
    },
    "degradation": {
        "kernel_a": -0.5,
        "factor": 4,
    },
    "sr": {
        "preset": "rdn",
        "magnification": 4,
        "channels": 3,
        "train": {
            "max_epochs": 200,
            "batch_size": 16,
            "initial_learning_rate": 0.0001,
            "lr_patch": 40,
            "lr_halving_epochs": 100,
        },
    },
    "detector": {
        "four_heads": True,
        "gsconv": True,
        "eca": True,
        "eca_spatial": False,
        "width_multiplier": 0.25,
        "depth_multiplier": 1.0,
        "input_side": 640,
        "reg_max": 16,
        "conf_threshold": 0.25,
        "nms_iou": 0.45,
        "train": {
            "max_epochs": 100,
            "batch_size": 8,
            "learning_rate": 0.001,
            "box_gain": 7.5,
            "cls_gain": 0.5,
            "dfl_gain": 1.5,
            "assign_topk": 10,
        },
    },
    "eval": {
        "iou_threshold": 0.5,
        "luminance_only": False,
    },
    "merge": {
        "merge_iou": 0.5,
    },
    "density": {
        "cell_size": 320.0,
        "pixels_per_cell": 16,
    },
    "camera": {
        "altitude_m": 5.0,
        "fov_deg": 94.0,
        "pixel_width": 5472,
    },
    "sweep": {
        "magnifications": [2, 3, 4, 5],
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Defaults, optionally overridden by a YAML file; unknown keys are errors."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {p}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return _merge(DEFAULT_CONFIG, data)


def detector_config(cfg: dict):
    from .detector.model import DetectorConfig

    d = cfg["detector"]
    return DetectorConfig(
        four_heads=d["four_heads"],
        gsconv=d["gsconv"],
        eca=d["eca"],
        eca_spatial=d["eca_spatial"],
        width_multiplier=d["width_multiplier"],
        depth_multiplier=d["depth_multiplier"],
        input_side=d["input_side"],
        reg_max=d["reg_max"],
        conf_threshold=d["conf_threshold"],
        nms_iou=d["nms_iou"],
    )


def detector_train_config(cfg: dict, seed: int):
    from .detector.train import DetTrainConfig

    t = cfg["detector"]["train"]
    return DetTrainConfig(
        max_epochs=t["max_epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        seed=seed,
        box_gain=t["box_gain"],
        cls_gain=t["cls_gain"],
        dfl_gain=t["dfl_gain"],
        assign_topk=t["assign_topk"],
    )


def sr_model_config(cfg: dict, magnification=None):
    from .sr.models import preset_config

    s = cfg["sr"]
    return preset_config(
        s["preset"],
        magnification=s["magnification"] if magnification is None else magnification,
        channels=s["channels"],
    )


def sr_train_config(cfg: dict, seed: int):
    from .sr.train import SRTrainConfig

    t = cfg["sr"]["train"]
    return SRTrainConfig(
        max_epochs=t["max_epochs"],
        batch_size=t["batch_size"],
        initial_learning_rate=t["initial_learning_rate"],
        lr_patch=t["lr_patch"],
        lr_halving_epochs=t["lr_halving_epochs"],
        seed=seed,
    )
