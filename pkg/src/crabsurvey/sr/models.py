"""The five super-resolution architectures at configurable width/depth/scale.

Every model maps a [B, C, H, W] tensor in [0, 1] to [B, C, m*H, m*W]. SRCNN
upsamples its input bicubically first (its classic design); the other four
work in LR space and finish with a single sub-pixel (depth-to-space) stage of
the exact factor m, so m = 3 and m = 5 need no staging tricks. EDSR carries
no normalization layers anywhere. EDSR/RDN/RCAN/SRFBN predict a residual on
top of a bicubically interpolated copy of the input: the zero-residual path
reproduces plain interpolation, which keeps short desk-scale training runs
well ahead of learning the identity mapping from scratch.

Default widths/depths are desk-scale so CPU training stays feasible; the
"*-full" presets mirror the customary published sizes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..torchutils import count_parameters

__all__ = ["ARCHITECTURES", "MAGNIFICATIONS", "SRModelConfig", "PRESETS",
           "preset_config", "build_sr_model", "forward_final", "count_parameters"]

ARCHITECTURES = ("SRCNN", "EDSR", "RDN", "RCAN", "SRFBN")
MAGNIFICATIONS = (2, 3, 4, 5)


@dataclass(frozen=True)
class SRModelConfig:
    architecture: str
    magnification: int = 4
    width: int = 32
    depth: int = 4
    channels: int = 3
    # RDN
    rdn_layers_per_block: int = 4
    rdn_growth: int = 16
    # RCAN
    rcan_blocks_per_group: int = 2
    rcan_reduction: int = 4
    # SRFBN
    srfbn_steps: int = 3

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture: {self.architecture}")
        if self.magnification not in MAGNIFICATIONS:
            raise ValueError(f"magnification must be one of {MAGNIFICATIONS}")
        for name in ("width", "depth", "rdn_layers_per_block", "rdn_growth",
                     "rcan_blocks_per_group", "rcan_reduction", "srfbn_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    def fingerprint(self) -> str:
        items = sorted(asdict(self).items())
        return "sr:" + ",".join(f"{k}={v}" for k, v in items)


PRESETS = {
    "srcnn": SRModelConfig("SRCNN", width=32, depth=3),
    "edsr": SRModelConfig("EDSR", width=16, depth=4),
    "rdn": SRModelConfig("RDN", width=32, depth=4, rdn_layers_per_block=4, rdn_growth=16),
    "rcan": SRModelConfig("RCAN", width=16, depth=2, rcan_blocks_per_group=2, rcan_reduction=4),
    "srfbn": SRModelConfig("SRFBN", width=16, depth=2, srfbn_steps=3),
    "rdn-tiny": SRModelConfig("RDN", width=16, depth=2, rdn_layers_per_block=2, rdn_growth=8),
    "edsr-full": SRModelConfig("EDSR", width=64, depth=16),
    "rdn-full": SRModelConfig("RDN", width=64, depth=16, rdn_layers_per_block=8, rdn_growth=64),
    "rcan-full": SRModelConfig("RCAN", width=64, depth=10, rcan_blocks_per_group=20, rcan_reduction=16),
    "srfbn-full": SRModelConfig("SRFBN", width=64, depth=4, srfbn_steps=4),
    "srcnn-full": SRModelConfig("SRCNN", width=64, depth=3),
}


def preset_config(name: str, magnification: int = 4, channels: int = 3) -> SRModelConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], magnification=magnification, channels=channels)


class SubPixelUpsampler(nn.Sequential):
    """Single depth-to-space stage of the exact factor."""

    def __init__(self, width, factor):
        super().__init__(
            nn.Conv2d(width, width * factor * factor, 3, padding=1),
            nn.PixelShuffle(factor),
        )


def _interp(x, factor):
    return F.interpolate(x, scale_factor=factor, mode="bicubic", align_corners=False)


def _damp_init(conv: nn.Conv2d, factor: float = 0.1) -> nn.Conv2d:
    """Shrink (not zero) a residual tail's init so training starts near the
    interpolation baseline while every parameter still receives gradient."""
    with torch.no_grad():
        conv.weight.mul_(factor)
        if conv.bias is not None:
            conv.bias.zero_()
    return conv


class SRCNN(nn.Module):
    """Bicubic pre-upsampling followed by the classic three conv stages."""

    def __init__(self, cfg: SRModelConfig):
        super().__init__()
        self.magnification = cfg.magnification
        mid = max(cfg.width // 2, 4)
        self.extract = nn.Conv2d(cfg.channels, cfg.width, 9, padding=4)
        self.map = nn.Conv2d(cfg.width, mid, 5, padding=2)
        self.reconstruct = nn.Conv2d(mid, cfg.channels, 5, padding=2)

    def forward(self, x):
        x = _interp(x, self.magnification)
        y = F.relu(self.extract(x))
        y = F.relu(self.map(y))
        return self.reconstruct(y)


class ResBlock(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class EDSR(nn.Module):
    """Residual blocks without any normalization layers, sub-pixel tail."""

    def __init__(self, cfg: SRModelConfig):
        super().__init__()
        self.magnification = cfg.magnification
        self.head = nn.Conv2d(cfg.channels, cfg.width, 3, padding=1)
        self.body = nn.Sequential(*[ResBlock(cfg.width) for _ in range(cfg.depth)])
        self.body_tail = nn.Conv2d(cfg.width, cfg.width, 3, padding=1)
        self.upsample = SubPixelUpsampler(cfg.width, cfg.magnification)
        self.tail = _damp_init(nn.Conv2d(cfg.width, cfg.channels, 3, padding=1))

    def forward(self, x):
        feat = self.head(x)
        res = self.body_tail(self.body(feat)) + feat
        return self.tail(self.upsample(res)) + _interp(x, self.magnification)


class DenseLayer(nn.Module):
    def __init__(self, in_ch, growth):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, growth, 3, padding=1)

    def forward(self, x):
        return torch.cat([x, F.relu(self.conv(x))], dim=1)


class ResidualDenseBlock(nn.Module):
    def __init__(self, width, growth, n_layers):
        super().__init__()
        layers = [DenseLayer(width + i * growth, growth) for i in range(n_layers)]
        self.layers = nn.Sequential(*layers)
        self.fuse = nn.Conv2d(width + n_layers * growth, width, 1)

    def forward(self, x):
        return x + self.fuse(self.layers(x))


class RDN(nn.Module):
    """Dense blocks with local and global feature fusion."""

    def __init__(self, cfg: SRModelConfig):
        super().__init__()
        self.magnification = cfg.magnification
        w = cfg.width
        self.sfe1 = nn.Conv2d(cfg.channels, w, 3, padding=1)
        self.sfe2 = nn.Conv2d(w, w, 3, padding=1)
        self.blocks = nn.ModuleList(
            [ResidualDenseBlock(w, cfg.rdn_growth, cfg.rdn_layers_per_block) for _ in range(cfg.depth)]
        )
        self.gff = nn.Sequential(
            nn.Conv2d(w * cfg.depth, w, 1),
            nn.Conv2d(w, w, 3, padding=1),
        )
        self.upsample = SubPixelUpsampler(w, cfg.magnification)
        self.tail = _damp_init(nn.Conv2d(w, cfg.channels, 3, padding=1))

    def forward(self, x):
        f0 = self.sfe1(x)
        f = self.sfe2(f0)
        locals_ = []
        for block in self.blocks:
            f = block(f)
            locals_.append(f)
        fused = self.gff(torch.cat(locals_, dim=1)) + f0
        return self.tail(self.upsample(fused)) + _interp(x, self.magnification)


class ChannelAttention(nn.Module):
    def __init__(self, width, reduction):
        super().__init__()
        hidden = max(width // reduction, 2)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.down = nn.Conv2d(width, hidden, 1)
        self.up = nn.Conv2d(hidden, width, 1)

    def forward(self, x):
        # smooth gate: at the narrow desk-scale widths a ReLU bottleneck can
        # die at init and never recover
        w = torch.sigmoid(self.up(F.silu(self.down(self.pool(x)))))
        return x * w


class RCAB(nn.Module):
    def __init__(self, width, reduction):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.attention = ChannelAttention(width, reduction)

    def forward(self, x):
        return x + self.attention(self.conv2(F.relu(self.conv1(x))))


class ResidualGroup(nn.Module):
    def __init__(self, width, n_blocks, reduction):
        super().__init__()
        self.blocks = nn.Sequential(*[RCAB(width, reduction) for _ in range(n_blocks)])
        self.tail = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, x):
        return x + self.tail(self.blocks(x))


class RCAN(nn.Module):
    """Residual groups with per-channel gating, long and short skips."""

    def __init__(self, cfg: SRModelConfig):
        super().__init__()
        self.magnification = cfg.magnification
        w = cfg.width
        self.head = nn.Conv2d(cfg.channels, w, 3, padding=1)
        self.groups = nn.Sequential(
            *[ResidualGroup(w, cfg.rcan_blocks_per_group, cfg.rcan_reduction) for _ in range(cfg.depth)]
        )
        self.body_tail = nn.Conv2d(w, w, 3, padding=1)
        self.upsample = SubPixelUpsampler(w, cfg.magnification)
        self.tail = _damp_init(nn.Conv2d(w, cfg.channels, 3, padding=1))

    def forward(self, x):
        feat = self.head(x)
        res = self.body_tail(self.groups(feat)) + feat
        return self.tail(self.upsample(res)) + _interp(x, self.magnification)


class FeedbackBlock(nn.Module):
    """Fuses the persistent LR features with last step's hidden state."""

    def __init__(self, width):
        super().__init__()
        self.compress = nn.Conv2d(2 * width, width, 1)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, feat, hidden):
        x = F.relu(self.compress(torch.cat([feat, hidden], dim=1)))
        x = F.relu(self.conv1(x))
        return self.conv2(x)


class SRFBN(nn.Module):
    """Iterative feedback: T reconstructions, each with a bicubic global skip."""

    def __init__(self, cfg: SRModelConfig):
        super().__init__()
        self.magnification = cfg.magnification
        self.steps = cfg.srfbn_steps
        w = cfg.width
        self.extract = nn.Sequential(
            nn.Conv2d(cfg.channels, w, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, w, 3, padding=1),
        )
        self.feedback = FeedbackBlock(w)
        self.upsample = SubPixelUpsampler(w, cfg.magnification)
        self.reconstruct = _damp_init(nn.Conv2d(w, cfg.channels, 3, padding=1))

    def forward(self, x):
        """Returns the list of T intermediate reconstructions, last is final."""
        skip = _interp(x, self.magnification)
        feat = self.extract(x)
        hidden = torch.zeros_like(feat)
        outs = []
        for _ in range(self.steps):
            hidden = self.feedback(feat, hidden)
            outs.append(self.reconstruct(self.upsample(hidden)) + skip)
        return outs


_BUILDERS = {
    "SRCNN": SRCNN,
    "EDSR": EDSR,
    "RDN": RDN,
    "RCAN": RCAN,
    "SRFBN": SRFBN,
}


def build_sr_model(config: SRModelConfig) -> nn.Module:
    model = _BUILDERS[config.architecture](config)
    model.config = config
    return model


def forward_final(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Model output as a single tensor (last feedback step for SRFBN)."""
    out = model(x)
    if isinstance(out, list):
        return out[-1]
    return out
