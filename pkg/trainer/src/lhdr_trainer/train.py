"""Phase I / Phase II training loops and validation helpers."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .constants import LOSS_WEIGHTS
from .data import BatchSampler, load_dataset
from .nets import TrainerStack
from .pipeline import iterative_merge, loss_pred, loss_var, loss_warp, predict_shift, psnr_mu


@dataclass
class TrainConfig:
    steps: int = 5000
    batch: int = 8
    crop: int = 64
    lr: float = 2e-3
    n_frames: int = 3
    seed: int = 0
    loss_weights: tuple = LOSS_WEIGHTS
    log_every: int = 200
    # Phase II curriculum: per-frame translation range widens from start to
    # end while the fraction of curriculum batches ramps up; the rest are
    # small-motion rehearsal batches.
    curriculum_start: tuple = (0.0, 14.0)
    curriculum_end: tuple = (21.0, 50.0)
    affine_ratio: tuple = (0.3, 0.8)


def _step_batch(stack, batch, weights):
    frames, noshift, masks, gt, e_base, _ = batch
    estimate, warped, shifts, _ = iterative_merge(stack, frames)
    # the estimate lives in base-exposure units; rescale to the gt's unit exposure
    estimate_unit = estimate / e_base.view(-1, 1, 1, 1)
    l_pred = loss_pred(estimate_unit, gt)
    l_warp = loss_warp(warped, noshift[:, 1:], masks[:, 1:])
    l_var = loss_var(shifts)
    lw = weights
    parts = (float(l_pred.detach()), float(l_warp.detach()), float(l_var.detach()))
    return lw[0] * l_pred + lw[1] * l_warp + lw[2] * l_var, parts


def validate(stack: TrainerStack, samples: list, crop: int = 64, n_frames: int = 3, seed: int = 1) -> dict:
    """Mean tone-mapped PSNR of the merged estimate and of the bare base frame."""
    sampler = BatchSampler(samples, crop=crop, batch=1, seed=seed, n_frames=n_frames)
    merged_db, base_db = [], []
    stack.eval()
    with torch.no_grad():
        for _ in range(len(samples)):
            frames, _, _, gt, e_base, _ = sampler.draw()
            scale = e_base.view(-1, 1, 1, 1)
            estimate, _, _, _ = iterative_merge(stack, frames)
            merged_db.append(psnr_mu((estimate / scale).clamp(0.0, 1.0), gt))
            base_db.append(psnr_mu((frames[:, 0] / scale).clamp(0.0, 1.0), gt))
    stack.train()
    finite = [(m, b) for m, b in zip(merged_db, base_db) if math.isfinite(m) and math.isfinite(b)]
    return {
        "psnr_mu_merged": float(np.mean([m for m, _ in finite])),
        "psnr_mu_base": float(np.mean([b for _, b in finite])),
    }


def train_phase1(data_dir, cfg: TrainConfig, out_path, val_dir=None) -> dict:
    """Small-motion supervised training of all three networks."""
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    samples = load_dataset(data_dir)
    sampler = BatchSampler(samples, crop=cfg.crop, batch=cfg.batch, seed=cfg.seed, n_frames=cfg.n_frames)
    stack = TrainerStack()
    opt = torch.optim.Adam(stack.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.steps)

    t0 = time.time()
    for step in range(cfg.steps):
        batch = sampler.draw()
        loss, parts = _step_batch(stack, batch, cfg.loss_weights)
        if not torch.isfinite(loss):
            stack.export_bundle(str(out_path) + ".diverged", {"phase": 1, "steps": step, "aborted": "non-finite loss"})
            raise RuntimeError(f"loss diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if cfg.log_every and step % cfg.log_every == 0:
            print(
                f"phase1 step {step:5d} loss {float(loss):.4f} "
                f"(pred {parts[0]:.4f} warp {parts[1]:.4f} var {parts[2]:.4f}) "
                f"[{time.time() - t0:.0f}s]",
                flush=True,
            )

    val_samples = load_dataset(val_dir) if val_dir else samples
    metrics = validate(stack, val_samples, crop=cfg.crop, n_frames=cfg.n_frames)
    metadata = {
        "phase": 1,
        "steps": cfg.steps,
        "batch": cfg.batch,
        "crop": cfg.crop,
        "lr": cfg.lr,
        "n_frames": cfg.n_frames,
        "loss_weights": list(cfg.loss_weights),
        "seed": cfg.seed,
        "train_samples": len(samples),
        "validation": metrics,
    }
    stack.export_bundle(out_path, metadata)
    return metadata


def train_phase2(data_dir, init_bundle, cfg: TrainConfig, out_path, val_dir=None) -> dict:
    """Translation curriculum updating only the coarse alignment module."""
    torch.manual_seed(cfg.seed + 1)
    samples = load_dataset(data_dir)
    sampler = BatchSampler(samples, crop=cfg.crop, batch=cfg.batch, seed=cfg.seed + 1, n_frames=cfg.n_frames)
    stack = TrainerStack()
    stack.import_bundle(init_bundle)
    stack.freeze_non_coarse()
    opt = torch.optim.Adam([p for p in stack.parameters() if p.requires_grad], lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.steps)
    rng = np.random.default_rng(cfg.seed + 2)

    t0 = time.time()
    for step in range(cfg.steps):
        t = step / max(1, cfg.steps - 1)
        lo = cfg.curriculum_start[0] + t * (cfg.curriculum_end[0] - cfg.curriculum_start[0])
        hi = cfg.curriculum_start[1] + t * (cfg.curriculum_end[1] - cfg.curriculum_start[1])
        ratio = cfg.affine_ratio[0] + t * (cfg.affine_ratio[1] - cfg.affine_ratio[0])
        extra = (lo, hi) if rng.random() < ratio else None
        batch = sampler.draw(extra_translation=extra)
        loss, _ = _step_batch(stack, batch, cfg.loss_weights)
        if not torch.isfinite(loss):
            stack.export_bundle(str(out_path) + ".diverged", {"phase": 2, "steps": step, "aborted": "non-finite loss"})
            raise RuntimeError(f"loss diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if cfg.log_every and step % cfg.log_every == 0:
            print(f"phase2 step {step:5d} loss {float(loss):.4f} range ({lo:.0f},{hi:.0f}) [{time.time() - t0:.0f}s]", flush=True)

    val_samples = load_dataset(val_dir) if val_dir else samples
    err = shift_error(stack, val_samples, translation=30.0, crop=cfg.crop, seed=cfg.seed + 3)
    metadata = {
        "phase": 2,
        "init": str(init_bundle),
        "steps": cfg.steps,
        "batch": cfg.batch,
        "crop": cfg.crop,
        "lr": cfg.lr,
        "loss_weights": list(cfg.loss_weights),
        "seed": cfg.seed,
        "curriculum": [list(cfg.curriculum_start), list(cfg.curriculum_end)],
        "affine_ratio": list(cfg.affine_ratio),
        "validation": {"shift_error_30px": err},
    }
    stack.export_bundle(out_path, metadata)
    return metadata


def shift_error(stack: TrainerStack, samples: list, translation: float, crop: int, seed: int, n_eval: int = 24) -> float:
    """Mean |mean predicted shift - ground truth| on pure known translations."""
    from .data import _translate_np

    sampler = BatchSampler(samples, crop=crop, batch=1, seed=seed, n_frames=2)
    rng = np.random.default_rng(seed)
    errs = []
    stack.eval()
    with torch.no_grad():
        for _ in range(n_eval):
            _, noshift, _, _, _, _ = sampler.draw()
            ang = rng.uniform(0, 2 * math.pi)
            dx, dy = translation * math.cos(ang), translation * math.sin(ang)
            moved = torch.from_numpy(_translate_np(noshift[0, 1].numpy(), dx, dy)).unsqueeze(0)
            shift = predict_shift(stack, noshift[:, 0], moved)
            # compare the mean prediction over the central region to the truth
            c = crop // 4
            pred = shift[:, :, c:-c, c:-c].mean(dim=(2, 3))[0]
            errs.append(math.hypot(float(pred[0]) - dx, float(pred[1]) - dy))
    stack.train()
    return float(np.mean(errs))
