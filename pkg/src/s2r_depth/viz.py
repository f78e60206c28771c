"""Static export of the intermediate maps: structure, attention, their product and depth."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from PIL import Image

from .checkpoint import Checkpoint
from .config import config_from_dict
from .data import read_image, resize_array
from .errors import MissingModuleError
from .model import intermediate_maps, load_model

OUTPUT_FILES = ("structure.png", "attention.png", "msa.png", "depth.png")
SIDECAR = "normalization.json"


def minmax_gray(values: np.ndarray) -> tuple[np.ndarray, dict]:
    """Per-image min-max stretch to uint8; a constant map becomes all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo
    scaled = (v - lo) / span if span > 0 else np.zeros_like(v)
    return np.round(scaled * 255).astype(np.uint8), {"min": lo, "max": hi}


def unit_gray(values: np.ndarray) -> np.ndarray:
    """[0, 1] -> [0, 255] without stretching."""
    return np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)


def colorize_depth(depth: np.ndarray, max_depth: float | None = None,
                   min_depth: float | None = None, cmap: str = "inferno") -> tuple[np.ndarray, dict]:
    """Inverse depth through a perceptual colormap; near is bright.

    The inverse-depth range defaults to the map's own range; a constant map
    lands on a single color.
    """
    inv = 1.0 / np.maximum(np.asarray(depth, dtype=np.float64), 1e-6)
    lo = 1.0 / max_depth if max_depth else float(inv.min())
    hi = 1.0 / min_depth if min_depth else float(inv.max())
    span = hi - lo
    t = np.clip((inv - lo) / span, 0.0, 1.0) if span > 0 else np.zeros_like(inv)
    rgb = colormaps[cmap](t)[..., :3]
    return np.round(rgb * 255).astype(np.uint8), {"inv_min": lo, "inv_max": hi, "colormap": cmap}


def visualize(ckpt, image_path, out_dir) -> list[Path]:
    """Write the four map PNGs and a JSON sidecar of display constants for one image.

    Needs a checkpoint from stage 3 or later; the checkpoint is only read.
    """
    ckpt = ckpt if isinstance(ckpt, Checkpoint) else Checkpoint.load(ckpt)
    model = load_model(ckpt, min_stage=3)
    if not model.uses_attention:
        raise MissingModuleError("baseline checkpoints have no structure or attention maps")
    image = read_image(image_path)
    target = tuple(config_from_dict(ckpt.metadata["config"]).data.target_resolution)
    if image.shape[:2] != target:
        image = np.clip(resize_array(image, target, "bilinear"), -1.0, 1.0)
    maps = intermediate_maps(model, image)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ms, ma, depth = maps["ms"][0], maps["ma"][0], maps["depth"][0]
    msa = maps["msa"]
    msa = msa[0] if msa.shape[0] == 1 else msa[0] * msa[1]  # concat mode: show the product
    structure, ms_norm = minmax_gray(ms)
    msa_img, msa_norm = minmax_gray(msa)
    depth_img, depth_norm = colorize_depth(depth)

    arrays = {"structure.png": structure, "attention.png": unit_gray(ma),
              "msa.png": msa_img, "depth.png": depth_img}
    paths = []
    for name in OUTPUT_FILES:
        path = out / name
        Image.fromarray(arrays[name]).save(path)
        paths.append(path)
    sidecar = {
        "structure": ms_norm,
        "attention": {"min": 0.0, "max": 1.0},
        "msa": msa_norm,
        "depth": {**depth_norm, "min_depth": float(depth.min()), "max_depth": float(depth.max())},
        "combine": model.combine_mode,
        "stage": ckpt.stage,
    }
    side = out / SIDECAR
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths + [side]
