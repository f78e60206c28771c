"""Multi-step training.

1. translation training of the structure encoder (frozen afterwards);
2. structure-map decoder + depth predictor on the structure map (decoder frozen afterwards);
3. attention + depth predictor on the combined map;
4. optional fine-tuning of attention + predictor on a few labeled target images.

A depth-predictor-only baseline on raw images is trained by :func:`train_baseline`.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .checkpoint import OPTIM_PREFIX, Checkpoint, hash_tensors
from .config import TrainConfig
from .data import ImageSample, iterate_batches
from .errors import StageOrderError, TrainingDivergenceError
from .losses import depth_l1, stage2_loss
from .model import S2RDepthNet, model_from_checkpoint

log = logging.getLogger("s2r_depth.train")

FROZEN_AFTER = {
    1: ["ste.encoder"],
    2: ["ste.encoder", "ste.decoder_ds"],
    3: ["ste.encoder", "ste.decoder_ds"],
    4: ["ste.encoder", "ste.decoder_ds"],
}
TRAINABLE = {
    1: ["ste.encoder", "ste.style_s", "ste.style_t", "ste.gen_s", "ste.gen_t", "ste.disc_s", "ste.disc_t"],
    2: ["ste.decoder_ds", "dp"],
    3: ["dsa", "dp"],
    4: ["dsa", "dp"],
}


def lr_at(epoch: int, base_lr: float = 1e-4, decay: float = 0.5, step: int = 10) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * decay ** (epoch // step)


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)

    def series(self, key):
        return [e[key] for e in self.epochs]


def _log_epoch(stage, epoch, lr, terms, callback):
    parts = " ".join(f"{k}={v:.6g}" for k, v in terms.items())
    line = f"stage={stage} epoch={epoch} lr={lr:.6g} {parts}"
    log.info(line)
    if callback is not None:
        callback(line)


def _under(name, prefixes):
    return any(name == p or name.startswith(p + ".") for p in prefixes)


def named_params_under(model: torch.nn.Module, prefixes):
    return [(n, p) for n, p in model.named_parameters() if _under(n, prefixes)]


def set_trainable(model: torch.nn.Module, prefixes):
    for name, p in model.named_parameters():
        p.requires_grad_(_under(name, prefixes))


def _seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % 2 ** 32)


def _optimizer_tensors(opt: torch.optim.Optimizer, names: dict) -> dict[str, torch.Tensor]:
    out = {}
    for p, state in opt.state.items():
        name = names[p]
        for key in ("exp_avg", "exp_avg_sq"):
            if key in state:
                out[f"{OPTIM_PREFIX}{name}.{key}"] = state[key]
    return out


def make_checkpoint(model: S2RDepthNet, config: TrainConfig, stage, epoch, *, optimizers=(),
                    history: History | None = None, variant=None, extra=None) -> Checkpoint:
    tensors = {k: v.detach().clone() for k, v in model.state_dict().items()}
    names = {p: n for n, p in model.named_parameters()}
    steps = {}
    for opt in optimizers:
        tensors.update(_optimizer_tensors(opt, names))
        for p, state in opt.state.items():
            if "step" in state:
                steps[names[p]] = int(state["step"])
    meta = {
        "stage": stage,
        "epoch": epoch,
        "variant": variant or model.variant,
        "combine": model.combine_mode,
        "config": config.to_dict(),
        "fingerprint": config.fingerprint(),
        "frozen": FROZEN_AFTER.get(stage, []) if isinstance(stage, int) else [],
        "optimizer_steps": steps,
        "history": history.epochs if history else [],
    }
    meta.update(extra or {})
    return Checkpoint(tensors, meta)


def _require(ckpt: Checkpoint, stage_min: int, needed: Sequence[str]):
    stage = ckpt.stage
    if ckpt.metadata.get("variant") == "baseline" or not isinstance(stage, int) or stage < stage_min:
        raise StageOrderError(f"need a stage >= {stage_min} checkpoint, got stage {stage!r}")
    frozen = set(ckpt.frozen)
    missing = [m for m in needed if m not in frozen or not ckpt.names_under(m)]
    if missing:
        raise StageOrderError(f"checkpoint lacks frozen prerequisite(s): {', '.join(missing)}")


class _LastGood:
    """Keeps a snapshot of the last finished epoch to dump if training diverges."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir) if out_dir else None
        self.ckpt = None

    def update(self, ckpt):
        self.ckpt = ckpt

    def abort(self, exc: TrainingDivergenceError, stage):
        path = None
        if self.ckpt is not None:
            out = self.out_dir or Path(tempfile.mkdtemp(prefix="s2r_"))
            path = self.ckpt.save(out / f"last_good_stage{stage}.safetensors")
        raise TrainingDivergenceError(f"{exc} (last good checkpoint: {path})", term=exc.term,
                                      last_good=path) from exc


def _check_finite(value: torch.Tensor, name: str):
    if not torch.isfinite(value).all():
        raise TrainingDivergenceError(f"loss term {name} is not finite", term=name)


def _adam(params, lr, betas, weight_decay):
    return torch.optim.Adam(params, lr=lr, betas=betas, weight_decay=weight_decay)


def _set_lr(opt, lr):
    for g in opt.param_groups:
        g["lr"] = lr


def _cycle(samples, batch_size, seed, augment_config):
    epoch = 0
    while True:
        yield from iterate_batches(samples, batch_size, seed=seed, epoch=epoch,
                                   augment_config=augment_config)
        epoch += 1


# -- stage 1 -----------------------------------------------------------------

def train_stage1(config: TrainConfig, source_data: Sequence[ImageSample],
                 style_data: Sequence[ImageSample], *, out_dir=None, callback: Callable | None = None,
                 max_batches: int | None = None) -> Checkpoint:
    if not source_data or not style_data:
        raise ValueError("stage 1 needs non-empty source and style datasets")
    s1 = config.stage1
    weights = s1.weights()
    _seed_everything(config.seed)
    model = S2RDepthNet(config.model, "s2r", config.combine, stage=1)
    ste = model.ste
    gen_params = [p for m in ste.generator_modules() for p in m.parameters()]
    dis_params = [p for m in ste.discriminator_modules() for p in m.parameters()]
    opt_g = _adam(gen_params, s1.lr, (s1.beta1, s1.beta2), s1.weight_decay)
    opt_d = _adam(dis_params, s1.lr, (s1.beta1, s1.beta2), s1.weight_decay)
    rng = torch.Generator().manual_seed(config.seed + 1)
    history, guard = History(), _LastGood(out_dir)
    aug = config.data
    if s1.flip_only:
        aug = dataclasses.replace(aug, rotation_range_deg=(0.0, 0.0), brightness_jitter=0.0)
    style_stream = _cycle(style_data, s1.batch_size, config.seed + 2, aug)
    model.train()

    for epoch in range(s1.epochs):
        lr = lr_at(epoch, s1.lr, s1.lr_decay, s1.lr_step)
        _set_lr(opt_g, lr)
        _set_lr(opt_d, lr)
        sums, n = {}, 0
        batches = iterate_batches(source_data, s1.batch_size, seed=config.seed, epoch=epoch,
                                  augment_config=aug)
        try:
            for i, batch in enumerate(batches):
                if max_batches is not None and i >= max_batches:
                    break
                x_s, x_t = batch.image, next(style_stream).image
                opt_d.zero_grad()
                d_loss = ste.discriminator_loss(x_s, x_t, rng, weights.gan_mode)
                d_loss.backward()
                opt_d.step()

                opt_g.zero_grad()
                parts = ste.translation_loss(x_s, x_t, rng, weights)
                _check_finite(parts.total, "total")
                parts.total.backward()
                opt_g.step()
                for k, v in {**parts.as_floats(), "disc": float(d_loss.detach())}.items():
                    sums[k] = sums.get(k, 0.0) + v
                n += 1
        except TrainingDivergenceError as exc:
            guard.abort(exc, 1)
        terms = {k: v / max(n, 1) for k, v in sums.items()}
        history.epochs.append({"epoch": epoch, "lr": lr, **terms})
        _log_epoch(1, epoch, lr, terms, callback)
        guard.update(make_checkpoint(model, config.replace(stage=1), 1, epoch, history=history))

    return make_checkpoint(model, config.replace(stage=1), 1, s1.epochs - 1,
                           optimizers=(opt_g, opt_d), history=history)


# -- depth stages --------------------------------------------------------------

def _depth_loop(model, config, data, stage, trainable, loss_fn, *, epochs=None, out_dir=None,
                callback=None, max_batches=None):
    """Shared loop for stages 2-4 and the baseline; returns (optimizer, history)."""
    set_trainable(model, trainable)
    params = [p for _, p in named_params_under(model, trainable)]
    opt = _adam(params, config.base_lr, (config.adam_beta1, config.adam_beta2), config.weight_decay)
    history, guard = History(), _LastGood(out_dir)
    epochs = config.epochs if epochs is None else epochs
    model.train()
    for epoch in range(epochs):
        lr = lr_at(epoch, config.base_lr, config.lr_decay, config.lr_step)
        _set_lr(opt, lr)
        sums, n = {}, 0
        batches = iterate_batches(data, config.batch_size, seed=config.seed + 100 * stage_index(stage),
                                  epoch=epoch, augment_config=config.data)
        try:
            for i, batch in enumerate(batches):
                if max_batches is not None and i >= max_batches:
                    break
                opt.zero_grad()
                loss = loss_fn(model, batch)
                for name, term in loss.terms.items():
                    _check_finite(term, name)
                loss.value.backward()
                opt.step()
                for k, v in {"loss": loss.item(), **loss.breakdown()}.items():
                    sums[k] = sums.get(k, 0.0) + v
                n += 1
        except TrainingDivergenceError as exc:
            guard.abort(exc, stage)
        terms = {k: v / max(n, 1) for k, v in sums.items()}
        history.epochs.append({"epoch": epoch, "lr": lr, **terms})
        _log_epoch(stage, epoch, lr, terms, callback)
        guard.update(make_checkpoint(model, config, stage, epoch, history=history))
    set_trainable(model, [])
    model.eval()
    return opt, history


def stage_index(stage) -> int:
    return stage if isinstance(stage, int) else 9


def _frozen_guard(model, prefixes):
    return hash_tensors(dict(model.state_dict()), prefixes)


def _assert_unchanged(model, prefixes, before):
    after = _frozen_guard(model, prefixes)
    if after != before:
        raise RuntimeError(f"frozen parameters under {prefixes} changed during training")


def _stage2_loss(loss_config):
    def fn(model, batch):
        ms = model.ste.structure_map(batch.image)
        return stage2_loss(model.dp(ms), batch.depth, batch.mask, ms, loss_config)
    return fn


def _l1_loss(loss_config):
    def fn(model, batch):
        return depth_l1(model.predict(batch.image), batch.depth, batch.mask, loss_config.reduction)
    return fn


def train_stage2(config: TrainConfig, source_data: Sequence[ImageSample], ckpt: Checkpoint,
                 **kw) -> Checkpoint:
    _require(ckpt, 1, FROZEN_AFTER[1])
    _seed_everything(config.seed + 2)
    model = model_from_checkpoint(ckpt)
    model.stage = 2
    frozen = FROZEN_AFTER[1]
    before = _frozen_guard(model, frozen)
    opt, history = _depth_loop(model, config, source_data, 2, TRAINABLE[2], _stage2_loss(config.loss), **kw)
    _assert_unchanged(model, frozen, before)
    return make_checkpoint(model, config.replace(stage=2), 2, len(history.epochs) - 1,
                           optimizers=(opt,), history=history)


def train_stage3(config: TrainConfig, source_data: Sequence[ImageSample], ckpt: Checkpoint,
                 **kw) -> Checkpoint:
    _require(ckpt, 2, FROZEN_AFTER[2])
    _seed_everything(config.seed + 3)
    model = model_from_checkpoint(ckpt)
    if ckpt.stage == 2:
        model.enter_stage3(config.combine)
    frozen = FROZEN_AFTER[2]
    before = _frozen_guard(model, frozen)
    opt, history = _depth_loop(model, config, source_data, 3, TRAINABLE[3], _l1_loss(config.loss), **kw)
    _assert_unchanged(model, frozen, before)
    return make_checkpoint(model, config.replace(stage=3), 3, len(history.epochs) - 1,
                           optimizers=(opt,), history=history)


def train_stage4_semi(config: TrainConfig, labeled_real_subset: Sequence[ImageSample], ckpt: Checkpoint,
                      **kw) -> Checkpoint:
    if not labeled_real_subset:
        raise ValueError("stage 4 needs a non-empty labeled subset")
    _require(ckpt, 3, FROZEN_AFTER[3])
    _seed_everything(config.seed + 4)
    model = model_from_checkpoint(ckpt)
    model.stage = 4
    frozen = FROZEN_AFTER[3]
    before = _frozen_guard(model, frozen)
    cfg = config.replace(combine=model.combine_mode)
    opt, history = _depth_loop(model, cfg, labeled_real_subset, 4, TRAINABLE[4], _l1_loss(config.loss), **kw)
    _assert_unchanged(model, frozen, before)
    return make_checkpoint(model, cfg.replace(stage=4), 4, len(history.epochs) - 1,
                           optimizers=(opt,), history=history, extra={"eval_scaling": "none"})


def train_baseline(config: TrainConfig, source_data: Sequence[ImageSample], *, epochs=None,
                   **kw) -> Checkpoint:
    """Depth predictor alone on raw RGB, with the stage 2-4 optimizer settings."""
    _seed_everything(config.seed + 5)
    model = S2RDepthNet(config.model, "baseline")
    opt, history = _depth_loop(model, config, source_data, "baseline", ["dp"], _l1_loss(config.loss),
                               epochs=epochs, **kw)
    return make_checkpoint(model, config, "baseline", len(history.epochs) - 1, optimizers=(opt,),
                           history=history, variant="baseline")


def run_stage(stage: int, config: TrainConfig, data, ckpt=None, style_data=None, **kw) -> Checkpoint:
    if stage == 1:
        return train_stage1(config, data, style_data, **kw)
    if ckpt is None:
        raise StageOrderError(f"stage {stage} needs --resume with a stage {stage - 1} checkpoint")
    return {2: train_stage2, 3: train_stage3, 4: train_stage4_semi}[stage](config, data, ckpt, **kw)


def clone_checkpoint(ckpt: Checkpoint) -> Checkpoint:
    return Checkpoint({k: v.clone() for k, v in ckpt.tensors.items()}, copy.deepcopy(ckpt.metadata))
