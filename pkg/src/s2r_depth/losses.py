"""Masked depth losses used to train the structure decoder, attention and predictor.

All tensors are ``N x 1 x H x W``; ``mask`` is boolean with True marking pixels
that carry ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import DegenerateBatchError, InvalidConfigError, ShapeError

GRAD_FORMS = ("literal", "separate")
REDUCTIONS = ("mean", "sum")


@dataclass
class LossValue:
    value: torch.Tensor
    terms: dict[str, torch.Tensor] = field(default_factory=dict)

    def item(self) -> float:
        return float(self.value.detach())

    def breakdown(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.terms.items()}


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    beta: float = 0.001
    grad_form: str = "literal"
    reduction: str = "mean"

    def __post_init__(self):
        if self.grad_form not in GRAD_FORMS:
            raise InvalidConfigError(f"grad_form must be one of {GRAD_FORMS}, got {self.grad_form!r}")
        if self.reduction not in REDUCTIONS:
            raise InvalidConfigError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.beta <= 0:
            raise InvalidConfigError("beta must be positive")
        if self.lam < 0:
            raise InvalidConfigError("lambda must be non-negative")


def _check_shapes(*tensors):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"shape mismatch: {tuple(shape)} vs {tuple(t.shape)}")


def _reduce(x: torch.Tensor, valid: torch.Tensor, reduction: str) -> torch.Tensor:
    total = torch.where(valid, x, torch.zeros_like(x)).sum()
    if reduction == "sum":
        return total
    return total / valid.sum()


def depth_l1(pred, gt, mask, reduction: str = "mean") -> LossValue:
    _check_shapes(pred, gt, mask)
    mask = mask.bool()
    if not mask.any():
        raise DegenerateBatchError("depth_l1: mask has no valid pixels")
    value = _reduce((pred - gt).abs(), mask, reduction)
    return LossValue(value, {"depth_l1": value})


def forward_gradients(depth: torch.Tensor, mask: torch.Tensor):
    """Forward differences along x and y plus the pixels where both are defined.

    The last column (row) has no forward neighbour and is dropped, unless the
    axis has length 1, in which case its derivative is taken as zero. A pixel
    is kept only if every pixel its stencil touches is valid.
    """
    mask = mask.bool()
    h, w = depth.shape[-2:]
    gx = torch.zeros_like(depth)
    gy = torch.zeros_like(depth)
    valid = mask.clone()
    if w > 1:
        gx[..., :, :-1] = depth[..., :, 1:] - depth[..., :, :-1]
        valid[..., :, :-1] &= mask[..., :, 1:]
        valid[..., :, -1] = False
    if h > 1:
        gy[..., :-1, :] = depth[..., 1:, :] - depth[..., :-1, :]
        valid[..., :-1, :] &= mask[..., 1:, :]
        valid[..., -1, :] = False
    return gx, gy, valid


def smoothness_gate(gt, mask, beta: float, grad_form: str = "literal"):
    """exp(-beta * |grad D|) and the pixels where it is defined."""
    gx, gy, valid = forward_gradients(gt, mask)
    if grad_form == "literal":
        mag = (gx + gy).abs()
    elif grad_form == "separate":
        mag = gx.abs() + gy.abs()
    else:
        raise InvalidConfigError(f"unknown grad_form {grad_form!r}")
    return torch.exp(-beta * mag), valid


def structure_regularizer(ms, gt, mask, beta: float = 0.001, grad_form: str = "literal",
                          reduction: str = "mean") -> LossValue:
    """|M_s(p)| weighted by how flat the ground-truth depth is around p."""
    _check_shapes(ms, gt, mask)
    if beta <= 0:
        raise InvalidConfigError("beta must be positive")
    gate, valid = smoothness_gate(gt, mask, beta, grad_form)
    if not valid.any():
        raise DegenerateBatchError("structure_regularizer: no valid interior pixels")
    value = _reduce(ms.abs() * gate, valid, reduction)
    return LossValue(value, {"structure_reg": value})


def stage2_loss(pred, gt, mask, ms, config: LossConfig = LossConfig()) -> LossValue:
    l1 = depth_l1(pred, gt, mask, config.reduction).value
    reg = structure_regularizer(ms, gt, mask, config.beta, config.grad_form, config.reduction).value
    weighted = config.lam * reg
    return LossValue(l1 + weighted, {"depth_l1": l1, "structure_reg": weighted})
