"""Depth-specific attention: a dilated residual encoder and an up-projection decoder
ending in a sigmoid, plus the ways of merging the attention and structure maps."""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import InvalidConfigError, ShapeError
from .translation import UpProjection

COMBINE_MODES = ("multiply", "add", "concat")
# Logits are clamped so the float32 sigmoid never rounds to exactly 0 or 1.
LOGIT_BOUND = 15.0


def _norm(ch):
    return nn.GroupNorm(min(8, ch), ch)


class BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1, dilation=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, padding=dilation, dilation=dilation, bias=False)
        self.n1 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, padding=dilation, dilation=dilation, bias=False)
        self.n2 = _norm(out_ch)
        self.down = None
        if stride != 1 or in_ch != out_ch:
            self.down = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, stride, bias=False), _norm(out_ch))

    def forward(self, x):
        y = torch.relu(self.n1(self.conv1(x)))
        y = self.n2(self.conv2(y))
        return torch.relu(y + (x if self.down is None else self.down(x)))


def _conv_layers(in_ch, out_ch, n, stride=1, dilation=1):
    layers = []
    for i in range(n):
        layers += [nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, 3, stride if i == 0 else 1,
                             padding=dilation, dilation=dilation, bias=False),
                   _norm(out_ch), nn.ReLU()]
    return nn.Sequential(*layers)


class DilatedResNet(nn.Module):
    """DRN-D-22 layout: output stride 8, later stages dilated instead of strided."""

    layers = (1, 1, 2, 2, 2, 2, 1, 1)
    stride = 8

    def __init__(self, in_ch=3, channels=(16, 32, 64, 128, 256, 512, 512, 512)):
        super().__init__()
        c = channels
        self.layer0 = nn.Sequential(nn.Conv2d(in_ch, c[0], 7, padding=3, bias=False), _norm(c[0]), nn.ReLU())
        self.layer1 = _conv_layers(c[0], c[0], self.layers[0])
        self.layer2 = _conv_layers(c[0], c[1], self.layers[1], stride=2)
        self.layer3 = nn.Sequential(BasicBlock(c[1], c[2], stride=2), BasicBlock(c[2], c[2]))
        self.layer4 = nn.Sequential(BasicBlock(c[2], c[3], stride=2), BasicBlock(c[3], c[3]))
        self.layer5 = nn.Sequential(BasicBlock(c[3], c[4], dilation=2), BasicBlock(c[4], c[4], dilation=2))
        self.layer6 = nn.Sequential(BasicBlock(c[4], c[5], dilation=4), BasicBlock(c[5], c[5], dilation=4))
        self.layer7 = _conv_layers(c[5], c[6], self.layers[6], dilation=2)
        self.layer8 = _conv_layers(c[6], c[7], self.layers[7], dilation=1)
        self.out_channels = c[7]

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % self.stride or w % self.stride:
            raise ShapeError(f"image dims {h}x{w} must be divisible by {self.stride}")
        for i in range(9):
            x = getattr(self, f"layer{i}")(x)
        return x


class AttentionDecoder(nn.Module):
    def __init__(self, in_ch=512, kernel=5):
        super().__init__()
        self.up = nn.Sequential(
            UpProjection(in_ch, in_ch // 2, kernel),
            UpProjection(in_ch // 2, in_ch // 4, kernel),
            UpProjection(in_ch // 4, in_ch // 8, kernel),
        )
        self.out = nn.Conv2d(in_ch // 8, 1, 3, padding=1)

    def forward(self, feats):
        logits = self.out(self.up(feats)).clamp(-LOGIT_BOUND, LOGIT_BOUND)
        return torch.sigmoid(logits)


class DSA(nn.Module):
    def __init__(self, encoder: nn.Module, decoder: nn.Module):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(cls, width=16, up_kernel=5):
        widths = tuple(width * m for m in (1, 2, 4, 8, 16, 32, 32, 32))
        enc = DilatedResNet(3, widths)
        return cls(enc, AttentionDecoder(enc.out_channels, up_kernel))

    def predict_attention(self, image):
        return self.decoder(self.encoder(image))

    forward = predict_attention


def combine(ms, ma, mode="multiply"):
    """Merge a structure map and an attention map (both N x 1 x H x W)."""
    if ms.shape[-2:] != ma.shape[-2:] or ms.shape[0] != ma.shape[0]:
        raise ShapeError(f"structure map {tuple(ms.shape)} and attention map {tuple(ma.shape)} differ")
    if mode == "multiply":
        return ms * ma
    if mode == "add":
        return ms + ma
    if mode == "concat":
        return torch.cat([ms, ma], dim=1)
    raise InvalidConfigError(f"combine mode must be one of {COMBINE_MODES}, got {mode!r}")


def combined_channels(mode):
    return 2 if mode == "concat" else 1
