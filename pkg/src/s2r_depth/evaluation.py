"""Standard monocular depth metrics with depth caps and optional median scaling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .errors import DegenerateBatchError, InvalidConfigError

EPS = 1e-3
SCALINGS = ("median", "none")
METRIC_NAMES = ("abs_rel", "squa_rel", "rmse", "rmse_log", "log10", "delta1", "delta2", "delta3")


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    squa_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    cap: float
    n_valid: int
    scaling: str = "none"
    n_images: int = 1
    n_skipped: int = 0

    def metrics(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def valid_set(gt, mask, cap: float) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    return np.asarray(mask, dtype=bool) & (gt > 0) & (gt <= cap)


def apply_cap(pred, gt, mask, cap: float, eps: float = EPS):
    """Drop ground truth beyond ``cap`` and clamp predictions into ``[eps, cap]``."""
    return np.clip(np.asarray(pred, dtype=np.float64), eps, cap), valid_set(gt, mask, cap)


def median_scale(pred, gt, mask) -> np.ndarray:
    """Rescale ``pred`` so its median over valid pixels equals the ground truth's."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateBatchError("median_scale: no valid pixels")
    med_pred = np.median(pred[mask])
    if med_pred <= 0:
        raise DegenerateBatchError("median_scale: median prediction is not positive")
    return pred * (np.median(gt[mask]) / med_pred)


def compute_metrics(pred, gt, mask, cap: float = 80.0, scaling: str = "none",
                    eps: float = EPS) -> MetricsReport:
    if scaling not in SCALINGS:
        raise InvalidConfigError(f"scaling must be one of {SCALINGS}, got {scaling!r}")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} differ")
    valid = valid_set(gt, mask, cap)
    if not valid.any():
        raise DegenerateBatchError(f"no valid ground truth at cap {cap}")
    if scaling == "median":
        pred = median_scale(pred, gt, valid)
    clamped, _ = apply_cap(pred, gt, valid, cap, eps)
    d = clamped[valid]
    g = gt[valid]

    thresh = np.maximum(d / g, g / d)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(d - g) / g)),
        squa_rel=float(np.mean((d - g) ** 2 / g)),
        rmse=float(np.sqrt(np.mean((d - g) ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(d) - np.log(g)) ** 2))),
        log10=float(np.mean(np.abs(np.log10(d) - np.log10(g)))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25 ** 2)),
        delta3=float(np.mean(thresh < 1.25 ** 3)),
        cap=float(cap),
        n_valid=int(valid.sum()),
        scaling=scaling,
    )


def average_reports(reports: list[MetricsReport], cap: float, scaling: str,
                    n_skipped: int = 0) -> MetricsReport:
    if not reports:
        raise DegenerateBatchError("no image had valid ground truth")
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRIC_NAMES}
    return MetricsReport(**means, cap=float(cap), n_valid=sum(r.n_valid for r in reports),
                         scaling=scaling, n_images=len(reports), n_skipped=n_skipped)


def evaluate_predictions(triples: Iterable[tuple], cap: float = 80.0,
                         scaling: str = "median") -> MetricsReport:
    """Per-image metrics over ``(pred, gt, mask)`` triples, averaged over images.

    Images without any valid pixel at this cap are skipped and counted.
    """
    reports, skipped = [], 0
    for pred, gt, mask in triples:
        if not valid_set(gt, mask, cap).any():
            skipped += 1
            continue
        reports.append(compute_metrics(pred, gt, mask, cap, scaling))
    return average_reports(reports, cap, scaling, skipped)


def evaluate_dataset(model_ckpt, dataset, cap: float = 80.0, scaling: str = "median",
                     batch_size: int = 16) -> MetricsReport:
    """Run a checkpointed model over ``dataset`` (samples or a directory) and score it."""
    from .data import read_dataset
    from .model import load_model, predict_samples

    samples = read_dataset(dataset) if not isinstance(dataset, (list, tuple)) else list(dataset)
    if not samples:
        raise DegenerateBatchError("evaluate_dataset: dataset is empty")
    model = load_model(model_ckpt) if not hasattr(model_ckpt, "predict") else model_ckpt
    preds = predict_samples(model, samples, batch_size=batch_size)
    return evaluate_predictions(
        ((p, s.depth, s.mask) for p, s in zip(preds, samples)), cap, scaling)
