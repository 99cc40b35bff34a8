"""Anchor-free multi-scale crab detector with three switchable enhancements.

Baseline topology is a CSP backbone with an SPPF cap, a top-down plus
bottom-up fusion neck, and decoupled heads at strides {8, 16, 32}. The
switches:

* ``four_heads`` extends the top-down path one stage further to stride 4 and
  adds a matching bottom-up stage and head, exploiting the highest-resolution
  feature map for the smallest objects.
* ``gsconv`` swaps the two designated top-down fusion convolutions (named
  ``td_fuse_p4`` and ``td_fuse_p3`` so the mapping is auditable in configs)
  from dense convs to the lighter GSConv block; the rest of the channel plan
  is untouched, so parameters can only go down.
* ``eca`` inserts an efficient-channel-attention gate after every neck
  fusion block.

Heads emit raw per-level class logits and box-side distance distributions;
decoding lives in :mod:`crabsurvey.detector.decode`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..boxes import NUM_CLASSES
from ..torchutils import count_parameters
from .blocks import C2f, Conv, ECA, GSConv, SPPF

GSCONV_POSITIONS = ("td_fuse_p4", "td_fuse_p3")
BASE_CHANNELS = (64, 128, 256, 512, 1024)
BASE_REPEATS = (1, 2, 2, 1)


@dataclass(frozen=True)
class DetectorConfig:
    four_heads: bool = False
    gsconv: bool = False
    eca: bool = False
    width_multiplier: float = 0.25
    depth_multiplier: float = 1.0
    num_classes: int = NUM_CLASSES
    input_side: int = 640
    reg_max: int = 16
    conf_threshold: float = 0.25
    nms_iou: float = 0.45
    eca_spatial: bool = False
    gsconv_positions: tuple = GSCONV_POSITIONS

    def __post_init__(self):
        if not 0.0 < self.width_multiplier <= 1.0 or not 0.0 < self.depth_multiplier <= 1.5:
            raise ValueError("multipliers out of range")
        if self.input_side % 32:
            raise ValueError(f"input_side must be divisible by 32, got {self.input_side}")
        if self.num_classes < 1 or self.reg_max < 2:
            raise ValueError("num_classes and reg_max out of range")
        unknown = set(self.gsconv_positions) - set(GSCONV_POSITIONS)
        if unknown:
            raise ValueError(f"unknown gsconv positions: {sorted(unknown)}")

    @property
    def strides(self) -> tuple:
        return (4, 8, 16, 32) if self.four_heads else (8, 16, 32)

    def channel(self, i: int) -> int:
        c = int(round(BASE_CHANNELS[i] * self.width_multiplier / 4.0)) * 4
        return max(c, 8)

    def repeats(self, i: int) -> int:
        return max(1, round(BASE_REPEATS[i] * self.depth_multiplier))

    def fingerprint(self) -> str:
        items = sorted(asdict(self).items())
        return "det:" + ",".join(f"{k}={v}" for k, v in items)


class LevelOutput(NamedTuple):
    stride: int
    cls: torch.Tensor  # (B, num_classes, H, W) raw logits
    reg: torch.Tensor  # (B, 4*reg_max, H, W) distance-bin logits


class Backbone(nn.Module):
    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        c0, c1, c2, c3, c4 = (cfg.channel(i) for i in range(5))
        self.stem = Conv(3, c0, 3, 2)
        self.down1 = Conv(c0, c1, 3, 2)
        self.stage1 = C2f(c1, c1, cfg.repeats(0))
        self.down2 = Conv(c1, c2, 3, 2)
        self.stage2 = C2f(c2, c2, cfg.repeats(1))
        self.down3 = Conv(c2, c3, 3, 2)
        self.stage3 = C2f(c3, c3, cfg.repeats(2))
        self.down4 = Conv(c3, c4, 3, 2)
        self.stage4 = C2f(c4, c4, cfg.repeats(3))
        self.sppf = SPPF(c4, c4)

    def forward(self, x):
        p2 = self.stage1(self.down1(self.stem(x)))  # stride 4
        p3 = self.stage2(self.down2(p2))  # stride 8
        p4 = self.stage3(self.down3(p3))  # stride 16
        p5 = self.sppf(self.stage4(self.down4(p4)))  # stride 32
        return p2, p3, p4, p5


class FuseBlock(nn.Module):
    """Fusion after a concat: one 3x3 conv (dense or GSConv) plus a C2f."""

    def __init__(self, c_in, c_out, n, use_gsconv, use_eca, eca_spatial):
        super().__init__()
        conv_cls = GSConv if use_gsconv else Conv
        self.fuse = conv_cls(c_in, c_out, 3)
        self.refine = C2f(c_out, c_out, n, shortcut=False)
        self.attend = ECA(c_out, spatial=eca_spatial) if use_eca else nn.Identity()

    def forward(self, x):
        return self.attend(self.refine(self.fuse(x)))


class Neck(nn.Module):
    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        c1, c2, c3, c4 = (cfg.channel(i) for i in range(1, 5))
        n = cfg.repeats(0)
        gs = cfg.gsconv_positions if cfg.gsconv else ()

        def fuse(c_in, c_out, name=""):
            return FuseBlock(c_in, c_out, n, name in gs, cfg.eca, cfg.eca_spatial)

        self.four_heads = cfg.four_heads
        self.td_fuse_p4 = fuse(c4 + c3, c3, "td_fuse_p4")
        self.td_fuse_p3 = fuse(c3 + c2, c2, "td_fuse_p3")
        if cfg.four_heads:
            self.td_fuse_p2 = fuse(c2 + c1, c1)
            self.down_p2 = Conv(c1, c1, 3, 2)
            self.bu_fuse_n3 = fuse(c1 + c2, c2)
        self.down_p3 = Conv(c2, c2, 3, 2)
        self.bu_fuse_n4 = fuse(c2 + c3, c3)
        self.down_p4 = Conv(c3, c3, 3, 2)
        self.bu_fuse_n5 = fuse(c3 + c4, c4)

    @staticmethod
    def _up(x):
        return F.interpolate(x, scale_factor=2.0, mode="nearest")

    def forward(self, p2, p3, p4, p5):
        t4 = self.td_fuse_p4(torch.cat([self._up(p5), p4], 1))
        t3 = self.td_fuse_p3(torch.cat([self._up(t4), p3], 1))
        if self.four_heads:
            t2 = self.td_fuse_p2(torch.cat([self._up(t3), p2], 1))
            n3 = self.bu_fuse_n3(torch.cat([self.down_p2(t2), t3], 1))
        else:
            t2, n3 = None, t3
        n4 = self.bu_fuse_n4(torch.cat([self.down_p3(n3), t4], 1))
        n5 = self.bu_fuse_n5(torch.cat([self.down_p4(n4), p5], 1))
        if self.four_heads:
            return [t2, n3, n4, n5]
        return [n3, n4, n5]


class Head(nn.Module):
    """Decoupled classification / box-distance branches for one level."""

    def __init__(self, c, num_classes, reg_max):
        super().__init__()
        h = max(16, c // 2)
        self.cls_stem = Conv(c, h, 3)
        self.cls_out = nn.Conv2d(h, num_classes, 1)
        self.box_stem = Conv(c, h, 3)
        self.box_out = nn.Conv2d(h, 4 * reg_max, 1)
        # bias priors keep early training stable: classes start rare; the
        # distance bins decay geometrically so every level initially proposes
        # boxes of roughly its own scale (~3 cells), which lets the aligned
        # assigner hand each object to the matching level from step one
        nn.init.constant_(self.cls_out.bias, -4.595)
        with torch.no_grad():
            decay = -0.5 * torch.arange(reg_max, dtype=torch.float32)
            self.box_out.bias.copy_(decay.repeat(4))

    def forward(self, x):
        return self.cls_out(self.cls_stem(x)), self.box_out(self.box_stem(x))


class CrabDetector(nn.Module):
    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        self.config = cfg
        self.backbone = Backbone(cfg)
        self.neck = Neck(cfg)
        level_channels = [cfg.channel(i) for i in ((1, 2, 3, 4) if cfg.four_heads else (2, 3, 4))]
        self.heads = nn.ModuleList(
            Head(c, cfg.num_classes, cfg.reg_max) for c in level_channels
        )
        self.strides = cfg.strides

    def forward(self, x) -> list[LevelOutput]:
        feats = self.neck(*self.backbone(x))
        out = []
        for stride, feat, head in zip(self.strides, feats, self.heads):
            cls, reg = head(feat)
            out.append(LevelOutput(stride, cls, reg))
        return out

    @property
    def parameter_count(self) -> int:
        return count_parameters(self)


def build_detector(cfg: DetectorConfig) -> CrabDetector:
    return CrabDetector(cfg)


ABLATION_FLAGS = (
    ("baseline", (False, False, False)),
    ("+head4", (True, False, False)),
    ("+head4+gsconv", (True, True, False)),
    ("+head4+gsconv+eca", (True, True, True)),
)


def ablation_lattice(**shared) -> list[tuple[str, DetectorConfig]]:
    """The four detector variants in lattice order, sharing all other knobs."""
    return [
        (name, DetectorConfig(four_heads=fh, gsconv=gc, eca=ec, **shared))
        for name, (fh, gc, ec) in ABLATION_FLAGS
    ]
