"""Procedural scenes with shared geometry and swappable appearance.

A scene is a perspective ground plane under a sky with a few fronto-parallel
boxes standing on it. Geometry (and therefore depth) is a pure function of the
geometry seed; the style domain only changes how the scene is painted:

* ``A``: flat per-surface colors plus additive stripes (lane lines on the
  ground, bands on boxes). The stripes are structure that carries no depth.
* ``B``: the inverted palette of ``A`` with a noise texture instead of stripes.
* ``CORPUS``: random palettes and random textures, standing in for a large
  collection of paintings used only to train the structure encoder.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Domain, ImageSample

MIN_RESOLUTION = 32
MIN_DEPTH = 1.0
# Camera height times focal length, in units of the image height.
GROUND_SCALE = 1.6
CAMERA_HEIGHT_M = 1.5

SKY, GROUND = 0, 1

PALETTE_A = np.array([
    [0.55, 0.75, 0.95],  # sky
    [0.35, 0.35, 0.38],  # ground
    [0.80, 0.20, 0.15],
    [0.20, 0.55, 0.25],
    [0.90, 0.75, 0.20],
    [0.25, 0.30, 0.70],
    [0.60, 0.40, 0.25],
    [0.75, 0.75, 0.70],
])
N_BOX_MATERIALS = len(PALETTE_A) - 2


class StyleDomain(str, enum.Enum):
    A = "A"
    B = "B"
    CORPUS = "corpus"


DATA_DOMAIN = {
    StyleDomain.A: Domain.SOURCE_SYNTHETIC,
    StyleDomain.B: Domain.REAL_TARGET,
    StyleDomain.CORPUS: Domain.STYLE_CORPUS,
}


@dataclass(frozen=True)
class Geometry:
    depth: np.ndarray       # H x W meters
    labels: np.ndarray      # H x W surface id; 0 sky, 1 ground, 2+ boxes
    materials: np.ndarray   # palette row per surface id
    horizon: float
    focal: float            # camera height * focal length, in pixels * meters


@dataclass(frozen=True)
class ToyScene:
    geometry_seed: int
    style_domain: StyleDomain
    sample: ImageSample
    labels: np.ndarray
    texture_mask: np.ndarray

    @property
    def edge_mask(self) -> np.ndarray:
        return surface_edges(self.labels)


def ground_depth(rows: np.ndarray, horizon: float, focal: float, max_depth: float) -> np.ndarray:
    """Depth of the ground plane at the given pixel rows; sky rows get max_depth."""
    rows = np.asarray(rows, dtype=np.float64)
    offset = rows + 0.5 - horizon
    with np.errstate(divide="ignore"):
        d = np.where(offset > 0, focal / np.where(offset > 0, offset, 1.0), np.inf)
    return np.clip(d, MIN_DEPTH, max_depth)


def surface_edges(labels: np.ndarray) -> np.ndarray:
    """Pixels on either side of a change in surface id."""
    edges = np.zeros(labels.shape, dtype=bool)
    dy = labels[1:, :] != labels[:-1, :]
    dx = labels[:, 1:] != labels[:, :-1]
    edges[1:, :] |= dy
    edges[:-1, :] |= dy
    edges[:, 1:] |= dx
    edges[:, :-1] |= dx
    return edges


def build_geometry(geometry_seed: int, resolution: tuple[int, int], max_depth: float = 80.0,
                   num_boxes: int | None = None) -> Geometry:
    h, w = resolution
    rng = np.random.default_rng(np.random.SeedSequence([geometry_seed, 0x6E0]))
    horizon = rng.uniform(0.3, 0.5) * h
    focal = rng.uniform(0.8, 1.2) * GROUND_SCALE * h
    drawn_boxes = int(rng.integers(3, 9))
    n = drawn_boxes if num_boxes is None else num_boxes

    rows = np.arange(h)
    depth = np.repeat(ground_depth(rows, horizon, focal, max_depth)[:, None], w, axis=1)
    labels = np.where(rows[:, None] + 0.5 > horizon, GROUND, SKY) * np.ones((1, w), dtype=np.int64)

    near = float(ground_depth(np.array([h - 1]), horizon, focal, max_depth)[0])
    far = min(0.6 * max_depth, 40.0)
    boxes = []
    for _ in range(n):
        d = float(np.exp(rng.uniform(np.log(1.5 * near), np.log(far))))
        height_m = rng.uniform(1.0, 3.0)
        width_m = rng.uniform(1.0, 4.0)
        center = rng.uniform(0, w)
        boxes.append((d, height_m, width_m, center, int(rng.integers(0, N_BOX_MATERIALS))))
    materials = [SKY, GROUND]
    # Paint far to near so closer boxes occlude.
    for sid, (d, height_m, width_m, center, mat) in enumerate(sorted(boxes, reverse=True), start=2):
        px_per_m = focal / CAMERA_HEIGHT_M / d
        bottom = int(np.clip(round(horizon - 0.5 + focal / d), 0, h - 1))
        top = int(np.clip(bottom - max(1, round(height_m * px_per_m)) + 1, 0, h - 1))
        half = max(1, round(width_m * px_per_m / 2))
        left = int(np.clip(round(center) - half, 0, w - 1))
        right = int(np.clip(round(center) + half, left + 1, w))
        depth[top:bottom + 1, left:right] = np.clip(d, MIN_DEPTH, max_depth)
        labels[top:bottom + 1, left:right] = sid
        materials.append(2 + mat)
    return Geometry(depth.astype(np.float32), labels, np.array(materials), horizon, focal)


def _lane_mask(geo: Geometry, rng: np.random.Generator) -> np.ndarray:
    h, w = geo.labels.shape
    mask = np.zeros((h, w), dtype=bool)
    vp = rng.uniform(0.3, 0.7) * w
    for _ in range(int(rng.integers(2, 4))):
        x_bottom = rng.uniform(-0.2, 1.2) * w
        for r in range(int(np.ceil(geo.horizon)), h):
            t = (r + 0.5 - geo.horizon) / (h - 0.5 - geo.horizon)
            c = int(round(vp + t * (x_bottom - vp)))
            if 0 <= c < w:
                mask[r, c] = True
    return mask & (geo.labels == GROUND)


def _band_mask(geo: Geometry, rng: np.random.Generator) -> np.ndarray:
    h, w = geo.labels.shape
    period = int(rng.integers(3, 6))
    phase = int(rng.integers(0, period))
    rows = ((np.arange(h) + phase) % period == 0)[:, None] & np.ones((1, w), dtype=bool)
    return rows & (geo.labels >= 2)


def _noise_texture(shape, rng, sigma):
    h, w = shape
    fine = rng.normal(0.0, sigma, size=(h, w, 1))
    coarse = rng.normal(0.0, sigma, size=(h // 4 + 1, w // 4 + 1, 1))
    coarse = np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1)[:h, :w]
    return fine + coarse


def render(geo: Geometry, style: StyleDomain, rng: np.random.Generator, texture: bool = True):
    """Paint a geometry; returns (image in [-1, 1], texture-stripe mask)."""
    shape = geo.labels.shape
    stripes = np.zeros(shape, dtype=bool)
    if style is StyleDomain.CORPUS:
        palette = rng.uniform(0.0, 1.0, size=PALETTE_A.shape)
    elif style is StyleDomain.B:
        palette = 1.0 - PALETTE_A
    else:
        palette = PALETTE_A
    color = palette[geo.materials[geo.labels]]

    if texture and style is StyleDomain.A:
        stripes = _lane_mask(geo, rng) | _band_mask(geo, rng)
        color = color + 0.45 * stripes[..., None]
    elif texture and style is StyleDomain.B:
        color = color + _noise_texture(shape, rng, 0.06)
    elif texture and style is StyleDomain.CORPUS:
        kind = int(rng.integers(0, 4))
        if kind == 1:
            color = color + _noise_texture(shape, rng, rng.uniform(0.02, 0.12))
        elif kind == 2:
            stripes = _lane_mask(geo, rng) | _band_mask(geo, rng)
            color = color + rng.uniform(-0.5, 0.5, size=3) * stripes[..., None]
        elif kind == 3:
            theta = rng.uniform(0, np.pi)
            freq = rng.uniform(0.2, 1.2)
            yy, xx = np.mgrid[:shape[0], :shape[1]]
            wave = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy))
            color = color + rng.uniform(0.05, 0.25) * wave[..., None]
    image = np.clip(color, 0.0, 1.0) * 2.0 - 1.0
    return image.astype(np.float32), stripes


def generate_scene(geometry_seed: int, style_domain, resolution=(32, 64), *,
                   max_depth: float = 80.0, texture: bool = True,
                   num_boxes: int | None = None) -> ToyScene:
    h, w = resolution
    if h < MIN_RESOLUTION or w < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}x{MIN_RESOLUTION}, got {resolution}")
    style = StyleDomain(style_domain)
    geo = build_geometry(geometry_seed, (h, w), max_depth, num_boxes)
    style_rng = np.random.default_rng(np.random.SeedSequence([geometry_seed, 0x571E, list(StyleDomain).index(style)]))
    image, stripes = render(geo, style, style_rng, texture=texture)
    sample = ImageSample.from_depth(image, geo.depth, DATA_DOMAIN[style], f"{style.value}{geometry_seed:06d}")
    texture_only = stripes & ~surface_edges(geo.labels)
    return ToyScene(geometry_seed, style, sample, geo.labels, texture_only)


def generate_samples(count: int, style_domain, seed: int = 0, resolution=(32, 64),
                     max_depth: float = 80.0) -> list[ImageSample]:
    """``count`` consecutive geometry seeds starting at ``seed``."""
    return [generate_scene(seed + i, style_domain, resolution, max_depth=max_depth).sample
            for i in range(count)]
