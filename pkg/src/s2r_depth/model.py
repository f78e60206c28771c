"""The assembled network and helpers to rebuild it from checkpoints."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .attention import DSA, combine, combined_channels
from .checkpoint import Checkpoint
from .config import ModelConfig, config_from_dict
from .data import ImageSample, collate
from .depth_predictor import DepthPredictor
from .errors import MissingModuleError
from .translation import STE

VARIANTS = ("s2r", "baseline")


class S2RDepthNet(nn.Module):
    """Structure extraction -> (attention) -> depth prediction.

    ``stage`` selects the forward path: up to stage 2 the predictor reads the
    structure map directly; from stage 3 on it reads the combination of the
    structure and attention maps. The ``baseline`` variant is the depth
    predictor alone on raw RGB.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), variant="s2r", combine_mode="multiply",
                 stage=1):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.config = config
        self.variant = variant
        self.combine_mode = combine_mode
        self.stage = stage
        if variant == "baseline":
            self.ste = None
            self.dsa = None
            self.dp = DepthPredictor(3, config.dp_width, config.max_depth)
            return
        self.ste = STE.build(config.ste_dim, config.ste_n_res, config.style_dim, config.gen_mlp_dim,
                             config.disc_dim, config.disc_layers, config.disc_scales,
                             config.ms_activation, config.up_kernel)
        self.dsa = DSA.build(config.dsa_width, config.up_kernel)
        in_ch = combined_channels(combine_mode) if stage >= 3 else 1
        self.dp = DepthPredictor(in_ch, config.dp_width, config.max_depth)

    @property
    def uses_attention(self):
        return self.variant == "s2r" and self.stage >= 3

    def forward(self, image):
        if self.variant == "baseline":
            return {"depth": self.dp(image)}
        ms = self.ste.structure_map(image)
        out = {"ms": ms}
        if self.uses_attention:
            ma = self.dsa.predict_attention(image)
            msa = combine(ms, ma, self.combine_mode)
            out.update(ma=ma, msa=msa)
            feed = msa
        else:
            feed = ms
        out["depth"] = self.dp(feed)
        return out

    def predict(self, image):
        return self(image)["depth"]

    def enter_stage3(self, combine_mode=None):
        if combine_mode is not None:
            self.combine_mode = combine_mode
        self.stage = 3
        self.dp.widen_input(combined_channels(self.combine_mode))


def model_from_checkpoint(ckpt: Checkpoint) -> S2RDepthNet:
    meta = ckpt.metadata
    train_cfg = config_from_dict(meta["config"])
    model = S2RDepthNet(train_cfg.model, meta.get("variant", "s2r"), meta.get("combine", "multiply"),
                        stage=meta.get("stage", 1) if meta.get("variant") != "baseline" else 3)
    model.load_state_dict(ckpt.parameters(), strict=True)
    return model


def load_model(source, min_stage: int | None = None) -> S2RDepthNet:
    ckpt = source if isinstance(source, Checkpoint) else Checkpoint.load(source)
    stage = ckpt.stage
    if min_stage is not None and ckpt.metadata.get("variant") != "baseline" and \
            (not isinstance(stage, int) or stage < min_stage):
        missing = {1: "structure decoder (stage 2)", 2: "depth-specific attention (stage 3)"}
        raise MissingModuleError(
            f"checkpoint is from stage {stage}; it lacks the {missing.get(stage, 'required modules')}")
    model = model_from_checkpoint(ckpt)
    model.eval()
    return model


@torch.no_grad()
def predict_samples(model: S2RDepthNet, samples: Sequence[ImageSample],
                    batch_size: int = 16) -> list[np.ndarray]:
    model.eval()
    preds = []
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start:start + batch_size])
        preds.extend(model.predict(batch.image)[:, 0].numpy())
    return preds


@torch.no_grad()
def intermediate_maps(model: S2RDepthNet, image: np.ndarray) -> dict[str, np.ndarray]:
    model.eval()
    t = torch.from_numpy(np.array(image, dtype=np.float32)).permute(2, 0, 1)[None]
    return {k: v[0].numpy() for k, v in model(t).items()}
