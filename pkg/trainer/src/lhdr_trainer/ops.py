"""Differentiable image ops mirroring the runtime semantics.

Conventions (must match the inference runtime):
- warping samples the source at (x + dx, y + dy), zero-pads out-of-bounds
  taps, and reports validity as the in-bounds bilinear weight mass;
- downsampling is a d x d box average, upsampling is bilinear with
  half-pixel centers and edge clamping;
- convolution is stride-1 cross-correlation over replicate padding;
- the alignment feature standardizes the tone-mapped RGB over all values
  and appends the gradient magnitude of its luma (replicate-padded central
  differences, with a tiny epsilon under the square root so gradients exist
  at zero).

All tensors are float32 (B, C, H, W).
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .constants import GAMMA, LUMA_WEIGHTS, MU, NORM_EPS

_GRAD_EPS = 1e-12


def tone_map(x: torch.Tensor, mu: float = MU) -> torch.Tensor:
    return torch.log1p(mu * x.clamp_min(0.0)) * (1.0 / math.log1p(mu))


def luma(rgb: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 1, H, W) Rec.709 luma."""
    w = rgb.new_tensor(LUMA_WEIGHTS).view(1, 3, 1, 1)
    return (rgb * w).sum(dim=1, keepdim=True)


def grad_mag(chan: torch.Tensor) -> torch.Tensor:
    """Central differences on a replicate-padded (B, 1, H, W) channel."""
    p = F.pad(chan, (1, 1, 1, 1), mode="replicate")
    gx = (p[:, :, 1:-1, 2:] - p[:, :, 1:-1, :-2]) * 0.5
    gy = (p[:, :, 2:, 1:-1] - p[:, :, :-2, 1:-1]) * 0.5
    return torch.sqrt(gx * gx + gy * gy + _GRAD_EPS)


def align_feature(img: torch.Tensor, mu: float = MU) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 4, H, W) standardized tone-mapped RGB + luma gradient."""
    tm = tone_map(img, mu)
    mean = tm.mean(dim=(1, 2, 3), keepdim=True)
    std = tm.var(dim=(1, 2, 3), keepdim=True, correction=0).sqrt()
    norm = (tm - mean) / (std + NORM_EPS)
    return torch.cat([norm, grad_mag(luma(norm))], dim=1)


def merge_feature(img: torch.Tensor, gamma: float = GAMMA) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 4, H, W) raw RGB + gamma-space luma.

    The gamma input is clamped to 1e-6: x^(1/gamma) has an unbounded
    derivative at 0, and warped frames contain exact zeros in vacated
    border strips.
    """
    g = img.clamp_min(1e-6).pow(1.0 / gamma)
    return torch.cat([img, luma(g)], dim=1)


def box_downsample(x: torch.Tensor, d: int) -> torch.Tensor:
    if d == 1:
        return x
    b, c, h, w = x.shape
    ph = (-h) % d
    pw = (-w) % d
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    return F.avg_pool2d(x, d)


def bilinear_upsample(x: torch.Tensor, d: int) -> torch.Tensor:
    """Half-pixel-center bilinear upsample with edge clamping, matching the runtime."""
    if d == 1:
        return x
    b, c, h, w = x.shape
    oh, ow = h * d, w * d
    sy = (torch.arange(oh, dtype=x.dtype, device=x.device) + 0.5) / d - 0.5
    sx = (torch.arange(ow, dtype=x.dtype, device=x.device) + 0.5) / d - 0.5
    sy = sy.clamp(0.0, h - 1.0)
    sx = sx.clamp(0.0, w - 1.0)
    y0 = sy.floor().long().clamp(max=max(h - 2, 0))
    x0 = sx.floor().long().clamp(max=max(w - 2, 0))
    fy = (sy - y0.to(x.dtype)).view(1, 1, oh, 1)
    fx = (sx - x0.to(x.dtype)).view(1, 1, 1, ow)
    y1 = (y0 + 1).clamp(max=h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)
    r0 = x[:, :, y0, :]
    r1 = x[:, :, y1, :]
    top = r0[:, :, :, x0] * (1 - fx) + r0[:, :, :, x1] * fx
    bot = r1[:, :, :, x0] * (1 - fx) + r1[:, :, :, x1] * fx
    return top * (1 - fy) + bot * fy


def warp_bilinear(img: torch.Tensor, shift: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Sample img at (x + dx, y + dy); zero padding, validity = in-bounds mass.

    img: (B, C, H, W); shift: (B, 2, H, W) with channel 0 = dx, 1 = dy.
    Returns (warped (B, C, H, W), validity (B, 1, H, W)). Differentiable in
    both the image and the shift field.
    """
    b, c, h, w = img.shape
    ys = torch.arange(h, dtype=img.dtype, device=img.device).view(1, h, 1)
    xs = torch.arange(w, dtype=img.dtype, device=img.device).view(1, 1, w)
    sx = xs + shift[:, 0]
    sy = ys + shift[:, 1]
    x0 = sx.floor()
    y0 = sy.floor()
    fx = sx - x0
    fy = sy - y0

    out = img.new_zeros(b, c, h, w)
    validity = img.new_zeros(b, 1, h, w)
    flat = img.reshape(b, c, h * w)
    for dy in (0, 1):
        for dx in (0, 1):
            xt = x0 + dx
            yt = y0 + dy
            wt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            inb = ((xt >= 0) & (xt <= w - 1) & (yt >= 0) & (yt <= h - 1)).to(img.dtype)
            # indices are sanitized so diverged (non-finite) shifts gather
            # garbage with NaN weights instead of crashing; the NaN then
            # surfaces in the loss where the training loop aborts
            xi = torch.nan_to_num(xt.clamp(0, w - 1)).long()
            yi = torch.nan_to_num(yt.clamp(0, h - 1)).long()
            idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
            taps = torch.gather(flat, 2, idx).reshape(b, c, h, w)
            out = out + (wt * inb).unsqueeze(1) * taps
            validity = validity + (wt * inb).unsqueeze(1)
    return out, validity


def conv_replicate(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    r = weight.shape[-1] // 2
    if r:
        x = F.pad(x, (r, r, r, r), mode="replicate")
    return F.conv2d(x, weight, bias)
