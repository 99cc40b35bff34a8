"""Building blocks of the detector: standard conv units, the lightweight
GSConv mixer, and efficient channel attention (ECA)."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


class Conv(nn.Module):
    """3x3-style conv -> BatchNorm -> SiLU; norm/act can be switched off."""

    def __init__(self, c1, c2, k=1, s=1, g=1, norm=True, act=True):
        super().__init__()
        self.conv = nn.Conv2d(c1, c2, k, s, padding=k // 2, groups=g, bias=not norm)
        self.norm = nn.BatchNorm2d(c2) if norm else nn.Identity()
        self.act = nn.SiLU() if act else nn.Identity()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class Bottleneck(nn.Module):
    def __init__(self, c1, c2, shortcut=True):
        super().__init__()
        self.cv1 = Conv(c1, c2, 3)
        self.cv2 = Conv(c2, c2, 3)
        self.add = shortcut and c1 == c2

    def forward(self, x):
        y = self.cv2(self.cv1(x))
        return x + y if self.add else y


class C2f(nn.Module):
    """Split/concat CSP block: n bottlenecks, all intermediate maps fused."""

    def __init__(self, c1, c2, n=1, shortcut=True):
        super().__init__()
        self.c = c2 // 2
        self.cv1 = Conv(c1, 2 * self.c, 1)
        self.m = nn.ModuleList(Bottleneck(self.c, self.c, shortcut) for _ in range(n))
        self.cv2 = Conv((2 + n) * self.c, c2, 1)

    def forward(self, x):
        y = list(self.cv1(x).chunk(2, 1))
        for m in self.m:
            y.append(m(y[-1]))
        return self.cv2(torch.cat(y, 1))


class SPPF(nn.Module):
    """Chained 5x5 max-pooling pyramid."""

    def __init__(self, c1, c2):
        super().__init__()
        c_ = c1 // 2
        self.cv1 = Conv(c1, c_, 1)
        self.cv2 = Conv(c_ * 4, c2, 1)
        self.pool = nn.MaxPool2d(5, stride=1, padding=2)

    def forward(self, x):
        y0 = self.cv1(x)
        y1 = self.pool(y0)
        y2 = self.pool(y1)
        y3 = self.pool(y2)
        return self.cv2(torch.cat([y0, y1, y2, y3], 1))


def channel_shuffle(x, groups=2):
    b, c, h, w = x.shape
    return x.view(b, groups, c // groups, h, w).transpose(1, 2).reshape(b, c, h, w)


class GSConv(nn.Module):
    """Lightweight conv mixing a depthwise-separable path with a transposed-conv path.

    The depthwise k x k conv (which carries any stride) feeds a pointwise conv
    producing half the output channels; a 3x3 transposed conv expands those
    into the other half. Parameter count stays strictly below a dense k x k
    convolution with the same in/out plan. An optional channel shuffle mixes
    the two halves.
    """

    def __init__(self, c1, c2, k=3, s=1, norm=True, act=True, shuffle=True):
        super().__init__()
        if c2 % 2:
            raise ValueError(f"GSConv needs an even output channel count, got {c2}")
        half = c2 // 2
        bias = not norm
        self.dw = nn.Conv2d(c1, c1, k, s, padding=k // 2, groups=c1, bias=bias)
        self.pw = nn.Conv2d(c1, half, 1, bias=bias)
        self.expand = nn.ConvTranspose2d(half, c2 - half, 3, 1, padding=1, bias=bias)
        self.norm = nn.BatchNorm2d(c2) if norm else nn.Identity()
        self.act = nn.SiLU() if act else nn.Identity()
        self.shuffle = shuffle

    def forward(self, x):
        a = self.pw(self.dw(x))
        y = torch.cat([a, self.expand(a)], 1)
        if self.shuffle:
            y = channel_shuffle(y)
        return self.act(self.norm(y))


class ECA(nn.Module):
    """Efficient channel attention: pooled descriptors -> local 1-D conv -> sigmoid gate.

    The 1-D kernel size adapts to the channel count (odd, ~log2 C). The
    optional spatial branch (group norm -> 1-channel conv -> sigmoid) follows
    the two-branch description; the default is channel-only.
    """

    def __init__(self, channels, gamma=2, b=1, spatial=False):
        super().__init__()
        if channels <= 0:
            raise ValueError("channels must be positive")
        k = int(abs((math.log2(channels) + b) / gamma))
        k = k if k % 2 else k + 1
        k = max(k, 1)
        self.conv = nn.Conv1d(1, 1, kernel_size=k, padding=k // 2, bias=False)
        self.spatial = None
        if spatial:
            self.spatial = nn.Sequential(
                nn.GroupNorm(math.gcd(4, channels), channels),
                nn.Conv2d(channels, 1, 7, padding=3),
            )

    def channel_weights(self, x):
        y = x.mean(dim=(2, 3))  # (B, C)
        y = self.conv(y.unsqueeze(1)).squeeze(1)  # local cross-channel interaction
        return torch.sigmoid(y)[:, :, None, None]

    def forward(self, x):
        out = x * self.channel_weights(x)
        if self.spatial is not None:
            out = out * torch.sigmoid(self.spatial(x))
        return out


class DFL(nn.Module):
    """Expectation over the discrete distance bins of one box side."""

    def __init__(self, reg_max=16):
        super().__init__()
        self.reg_max = reg_max
        proj = torch.arange(reg_max, dtype=torch.float32)
        self.register_buffer("proj", proj)

    def forward(self, dist):
        # dist: (B, 4*reg_max, A) -> (B, 4, A)
        b, _, a = dist.shape
        probs = dist.view(b, 4, self.reg_max, a).softmax(dim=2)
        return torch.einsum("bfra,r->bfa", probs, self.proj)
