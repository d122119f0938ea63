"""Differentiable align-and-merge pipeline and the training losses."""

from __future__ import annotations

import math

import torch

from .constants import COARSE_BOUND, COARSE_FACTOR, FINE_BOUND, MU
from .nets import TrainerStack
from .ops import (
    align_feature,
    bilinear_upsample,
    box_downsample,
    merge_feature,
    tone_map,
    warp_bilinear,
)


def predict_shift(stack: TrainerStack, i_b: torch.Tensor, i_a: torch.Tensor) -> torch.Tensor:
    """Bounded coarse-to-fine shift field (B, 2, H, W) registering i_a onto i_b."""
    h, w = i_b.shape[-2:]
    phi_b = align_feature(i_b)
    phi_a = align_feature(i_a)
    stacked = torch.cat([phi_a, phi_b, phi_a - phi_b], dim=1)

    coarse_in = box_downsample(stacked, COARSE_FACTOR)
    s_c_low = COARSE_BOUND * stack.coarse(coarse_in)
    s_c = COARSE_FACTOR * bilinear_upsample(s_c_low, COARSE_FACTOR)[:, :, :h, :w]

    i_a_coarse, _ = warp_bilinear(i_a, s_c)
    phi_ac = align_feature(i_a_coarse)
    s_f = FINE_BOUND * stack.fine(torch.cat([phi_ac, phi_b, phi_ac - phi_b], dim=1))
    return s_c + s_f


def merge_pair(
    stack: TrainerStack, estimate: torch.Tensor, warped: torch.Tensor, validity: torch.Tensor
) -> torch.Tensor:
    """Convex blend of the running estimate with a warped frame, gated by validity."""
    logits = stack.merge(torch.cat([merge_feature(estimate), merge_feature(warped)], dim=1))
    probs = torch.softmax(logits, dim=1)
    w_b = probs[:, 0:1]
    w_a = probs[:, 1:2] * validity
    total = w_b + w_a
    w_a = w_a / total
    return estimate + w_a * (warped - estimate)


def iterative_merge(stack: TrainerStack, frames: torch.Tensor):
    """Fuse (B, N, 3, H, W) base-normalized frames; returns (estimate, warped, shifts).

    The same network weights serve every iteration; warped frames and shift
    fields for the alternates are returned for the auxiliary losses.
    """
    b, n = frames.shape[:2]
    estimate = frames[:, 0]
    warped_frames, shifts, validities = [], [], []
    for i in range(1, n):
        shift = predict_shift(stack, estimate, frames[:, i])
        warped, validity = warp_bilinear(frames[:, i], shift)
        estimate = merge_pair(stack, estimate, warped, validity)
        warped_frames.append(warped)
        shifts.append(shift)
        validities.append(validity)
    return estimate, warped_frames, shifts, validities


def loss_pred(h_hat: torch.Tensor, h_gt: torch.Tensor, mu: float = MU) -> torch.Tensor:
    return (tone_map(h_hat, mu) - tone_map(h_gt, mu)).abs().mean()


def loss_warp(warped: list, noshift: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Masked mean warp error summed over alternates.

    noshift: (B, N-1, 3, H, W) base-normalized targets; masks: (B, N-1, 1, H, W).
    """
    total = warped[0].new_zeros(())
    for i, w in enumerate(warped):
        m = masks[:, i]
        diff = (w - noshift[:, i]).abs().mean(dim=1, keepdim=True)
        total = total + (m * diff).sum() / m.sum().clamp_min(1.0)
    return total


def loss_var(shifts: list) -> torch.Tensor:
    total = shifts[0].new_zeros(())
    for s in shifts:
        total = total + s.var(dim=(2, 3), correction=0).sum(dim=1).mean()
    return total


def psnr_mu(pred: torch.Tensor, ref: torch.Tensor, mu: float = MU) -> float:
    mse = float(((tone_map(pred, mu) - tone_map(ref, mu)) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
