"""Dense depth regression from a (structure) map or a raw image."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError

DEPTH_FLOOR = 1e-3


def _block(in_ch, out_ch):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1), nn.GroupNorm(min(8, out_ch), out_ch), nn.ReLU(),
        nn.Conv2d(out_ch, out_ch, 3, padding=1), nn.GroupNorm(min(8, out_ch), out_ch), nn.ReLU(),
    )


def bounded_depth(raw, max_depth, floor=DEPTH_FLOOR):
    """(max_depth - floor) * sigmoid(raw) + floor, which lies in [floor, max_depth]."""
    return (max_depth - floor) * torch.sigmoid(raw) + floor


class DepthPredictor(nn.Module):
    """U-Net with four scales and skip connections."""

    scales = 4

    def __init__(self, in_channels=1, width=16, max_depth=80.0):
        super().__init__()
        w = [width * 2 ** i for i in range(self.scales)]
        self.in_channels = in_channels
        self.max_depth = float(max_depth)
        self.enc = nn.ModuleList([_block(in_channels, w[0])] +
                                 [_block(w[i - 1], w[i]) for i in range(1, self.scales)])
        self.dec = nn.ModuleList(_block(w[i + 1] + w[i], w[i]) for i in reversed(range(self.scales - 1)))
        self.head = nn.Conv2d(w[0], 1, 1)

    def forward(self, x):
        return bounded_depth(self.raw(x), self.max_depth)

    predict_depth = forward

    def raw(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"depth predictor expects {self.in_channels} input channels, got {x.shape[1]}")
        div = 2 ** (self.scales - 1)
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ShapeError(f"input dims {tuple(x.shape[-2:])} must be divisible by {div}")
        skips = []
        for i, block in enumerate(self.enc):
            x = block(x if i == 0 else F.max_pool2d(x, 2))
            skips.append(x)
        x = skips.pop()
        for block in self.dec:
            skip = skips.pop()
            x = block(torch.cat([F.interpolate(x, size=skip.shape[-2:], mode="nearest"), skip], dim=1))
        return self.head(x)

    @torch.no_grad()
    def widen_input(self, channels: int):
        """Grow the first conv to ``channels`` inputs; new channels start at zero weight."""
        if channels == self.in_channels:
            return
        if channels < self.in_channels:
            raise ValueError("cannot narrow the depth predictor input")
        old = self.enc[0][0]
        new = nn.Conv2d(channels, old.out_channels, 3, padding=1).to(old.weight.dtype)
        new.weight.zero_()
        new.weight[:, :self.in_channels] = old.weight
        new.bias.copy_(old.bias)
        self.enc[0][0] = new
        self.in_channels = channels
