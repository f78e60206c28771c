"""Image/depth samples: preprocessing, augmentation, on-disk layout and batching.

Images are float arrays in [-1, 1] with shape (H, W, 3). Depth maps are meters,
with 0 marking pixels that carry no ground truth.
"""

from __future__ import annotations

import enum
import io
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from scipy import ndimage

from .errors import DepthEncodingError, InvalidConfigError, ShapeError

INDEX_FILE = "index.txt"
DEPTH_SCALE = 256.0


class Domain(str, enum.Enum):
    SOURCE_SYNTHETIC = "source_synthetic"
    STYLE_CORPUS = "style_corpus"
    REAL_TARGET = "real_target"


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageSample:
    image: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    domain: Domain = Domain.SOURCE_SYNTHETIC
    sample_id: str = ""

    def __post_init__(self):
        image = np.asarray(self.image, dtype=np.float32)
        depth = np.asarray(self.depth, dtype=np.float32)
        mask = np.asarray(self.mask, dtype=bool)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeError(f"image must be HxWx3, got {image.shape}")
        if depth.shape != image.shape[:2] or mask.shape != image.shape[:2]:
            raise ShapeError(
                f"image {image.shape[:2]}, depth {depth.shape} and mask {mask.shape} disagree"
            )
        if np.any(depth[mask] <= 0):
            raise ValueError("mask marks a pixel valid where depth is not positive")
        if np.any(depth[~mask] != 0):
            raise ValueError("invalid pixels must carry depth 0")
        object.__setattr__(self, "image", _frozen(image))
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @classmethod
    def from_depth(cls, image, depth, domain=Domain.SOURCE_SYNTHETIC, sample_id=""):
        """Build a sample whose mask is simply ``depth > 0``."""
        depth = np.asarray(depth, dtype=np.float32)
        mask = depth > 0
        return cls(image, np.where(mask, depth, 0.0), mask, domain, sample_id)


@dataclass(frozen=True)
class DatasetConfig:
    max_depth: float = 80.0
    target_resolution: tuple[int, int] = (192, 640)
    flip_probability: float = 0.5
    rotation_range_deg: tuple[float, float] = (-5.0, 5.0)
    brightness_jitter: float = 0.2
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise InvalidConfigError(f"flip_probability must lie in [0, 1], got {self.flip_probability}")
        lo, hi = self.rotation_range_deg
        if lo > hi:
            raise InvalidConfigError(f"rotation range ({lo}, {hi}) is reversed")
        if min(self.target_resolution) <= 0:
            raise InvalidConfigError(f"target resolution must be positive, got {self.target_resolution}")
        if self.max_depth <= 0:
            raise InvalidConfigError("max_depth must be positive")
        if self.brightness_jitter < 0:
            raise InvalidConfigError("brightness_jitter must be >= 0")


def clip_depth(depth, max_depth: float) -> np.ndarray:
    if max_depth <= 0:
        raise InvalidConfigError(f"max_depth must be positive, got {max_depth}")
    return np.minimum(np.asarray(depth), max_depth)


def clip_sample(sample: ImageSample, max_depth: float) -> ImageSample:
    return replace(sample, depth=clip_depth(sample.depth, max_depth))


def flip_sample(sample: ImageSample) -> ImageSample:
    return replace(
        sample,
        image=sample.image[:, ::-1],
        depth=sample.depth[:, ::-1],
        mask=sample.mask[:, ::-1],
    )


def rotate_sample(sample: ImageSample, angle_deg: float) -> ImageSample:
    """Rotate about the image center. Pixels rotated in from outside the frame
    become invalid depth and zero image."""
    if angle_deg == 0:
        return sample
    image = ndimage.rotate(sample.image, angle_deg, axes=(1, 0), reshape=False, order=1,
                           mode="constant", cval=0.0)
    mask = ndimage.rotate(sample.mask.astype(np.uint8), angle_deg, axes=(1, 0), reshape=False,
                          order=0, mode="constant", cval=0).astype(bool)
    depth = ndimage.rotate(sample.depth, angle_deg, axes=(1, 0), reshape=False, order=0,
                           mode="constant", cval=0.0)
    mask &= depth > 0
    depth = np.where(mask, depth, 0.0)
    return replace(sample, image=np.clip(image, -1.0, 1.0), depth=depth, mask=mask)


def adjust_brightness(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale brightness in [0, 1] intensity space and map back to [-1, 1]."""
    unit = (np.asarray(image) + 1.0) * 0.5
    return np.clip(unit * factor * 2.0 - 1.0, -1.0, 1.0)


def augment(sample: ImageSample, rng: np.random.Generator,
            config: DatasetConfig = DatasetConfig()) -> ImageSample:
    # All three draws are made unconditionally so the stream position never
    # depends on which augmentations fire.
    flip_draw = rng.random()
    angle = rng.uniform(*config.rotation_range_deg)
    factor = rng.uniform(1.0 - config.brightness_jitter, 1.0 + config.brightness_jitter)

    out = sample
    if flip_draw < config.flip_probability:
        out = flip_sample(out)
    out = rotate_sample(out, float(angle))
    if config.brightness_jitter > 0:
        out = replace(out, image=adjust_brightness(out.image, float(factor)))
    return out


def resize_array(arr: np.ndarray, size: tuple[int, int], mode: str) -> np.ndarray:
    t = torch.from_numpy(np.array(arr, dtype=np.float32))
    t = t.permute(2, 0, 1)[None] if t.ndim == 3 else t[None, None]
    kwargs = {"align_corners": False} if mode == "bilinear" else {}
    out = F.interpolate(t, size=size, mode=mode, **kwargs)[0]
    return (out.permute(1, 2, 0) if arr.ndim == 3 else out[0]).numpy()


def resize_pair(sample: ImageSample, target: tuple[int, int]) -> ImageSample:
    h, w = target
    if h <= 0 or w <= 0:
        raise InvalidConfigError(f"target dims must be positive, got {target}")
    src_h, src_w = sample.shape
    if (h, w) == (src_h, src_w):
        return sample
    if h > 4 * src_h or w > 4 * src_w:
        warnings.warn(f"upsampling {sample.shape} -> {target} exceeds 4x", stacklevel=2)
    image = np.clip(resize_array(sample.image, (h, w), "bilinear"), -1.0, 1.0)
    depth = resize_array(sample.depth, (h, w), "nearest-exact")
    mask = resize_array(sample.mask.astype(np.float32), (h, w), "nearest-exact") > 0.5
    return replace(sample, image=image, depth=np.where(mask, depth, 0.0), mask=mask)


def preprocess(sample: ImageSample, config: DatasetConfig) -> ImageSample:
    return resize_pair(clip_sample(sample, config.max_depth), tuple(config.target_resolution))


# -- on-disk formats ---------------------------------------------------------

def encode_depth_png(depth) -> bytes:
    """16-bit grayscale PNG holding round(depth * 256); 0 means invalid.

    Positive depths below 1/512 m are stored as 1 so they stay valid.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ShapeError(f"depth must be 2-D, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise DepthEncodingError("depth must be finite and non-negative")
    if np.any(depth >= 256.0):
        raise DepthEncodingError(f"depth {depth.max():.3f} m does not fit the 16-bit x256 encoding")
    stored = np.round(depth * DEPTH_SCALE)
    stored[(depth > 0) & (stored == 0)] = 1
    if stored.max(initial=0) > np.iinfo(np.uint16).max:
        raise DepthEncodingError("depth too close to 256 m to encode")
    buf = io.BytesIO()
    Image.fromarray(stored.astype(np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def decode_depth_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    if img.mode not in ("I;16", "I;16B", "I;16L"):
        raise DepthEncodingError(f"expected a 16-bit grayscale PNG, got mode {img.mode!r}")
    return np.asarray(img, dtype=np.float64) / DEPTH_SCALE


def image_to_uint8(image) -> np.ndarray:
    return np.round((np.clip(np.asarray(image), -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def uint8_to_image(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float32) / 127.5 - 1.0


def read_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return uint8_to_image(img.convert("RGB"))


def write_dataset(root, samples: Sequence[ImageSample]) -> Path:
    """Write ``<root>/{images,depths}/<id>.png`` plus the index file."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depths").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        sid = s.sample_id or f"{i:06d}"
        Image.fromarray(image_to_uint8(s.image)).save(root / "images" / f"{sid}.png")
        (root / "depths" / f"{sid}.png").write_bytes(encode_depth_png(s.depth))
        lines.append(f"{sid} {s.domain.value}\n")
    (root / INDEX_FILE).write_text("".join(lines), encoding="utf-8")
    return root


def read_dataset(root) -> list[ImageSample]:
    root = Path(root)
    index = root / INDEX_FILE
    if not index.exists():
        raise FileNotFoundError(f"no {INDEX_FILE} under {root}")
    samples = []
    for line in index.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sid, tag = line.split()
        image = read_image(root / "images" / f"{sid}.png")
        depth = decode_depth_png((root / "depths" / f"{sid}.png").read_bytes())
        samples.append(ImageSample.from_depth(image, depth, Domain(tag), sid))
    return samples


# -- batching -----------------------------------------------------------------

@dataclass
class Batch:
    image: torch.Tensor  # N x 3 x H x W
    depth: torch.Tensor  # N x 1 x H x W
    mask: torch.Tensor   # N x 1 x H x W, bool
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return self.image.shape[0]


def collate(samples: Sequence[ImageSample]) -> Batch:
    image = torch.from_numpy(np.stack([s.image for s in samples])).permute(0, 3, 1, 2)
    depth = torch.from_numpy(np.stack([s.depth for s in samples]))[:, None]
    mask = torch.from_numpy(np.stack([s.mask for s in samples]))[:, None]
    return Batch(image.contiguous(), depth.contiguous(), mask, [s.sample_id for s in samples])


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample stream so results do not depend on worker layout."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))


def iterate_batches(samples: Sequence[ImageSample], batch_size: int, *, seed: int = 0,
                    epoch: int = 0, shuffle: bool = True,
                    augment_config: DatasetConfig | None = None) -> Iterator[Batch]:
    if batch_size <= 0:
        raise InvalidConfigError("batch_size must be positive")
    order = np.arange(len(samples))
    if shuffle:
        order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(order)
    for start in range(0, len(order), batch_size):
        chunk = []
        for idx in order[start:start + batch_size]:
            s = samples[int(idx)]
            if augment_config is not None and augment_config.augment:
                s = augment(s, sample_rng(seed, epoch, int(idx)), augment_config)
            chunk.append(s)
        yield collate(chunk)
