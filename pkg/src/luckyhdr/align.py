"""Exposure-invariant features and coarse-to-fine bounded shift prediction.

The alignment feature of an exposure-normalized frame is its standardized
tone-mapped RGB plus the gradient magnitude of that signal's luma. A coarse
network predicts a tanh-bounded shift on the box-downsampled feature stack,
the field is bilinearly upsampled and scaled back to full resolution, the
alternate frame is pre-warped with it, and a fine network predicts a bounded
residual. The tanh parameterization makes the shift bound structural: no
weights can produce components beyond d*m_c + m_f pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constants import LUMA_WEIGHTS, MU_DEFAULT, NORM_EPS
from .errors import ParameterError
from .imaging import LinearImage, bilinear_warp, tone_map_mu
from .nets import COARSE_SPEC, FINE_SPEC, NetStack
from .tinycnn import avg_downsample, bilinear_upsample, forward


@dataclass(frozen=True)
class AlignConfig:
    d: int = 4  # coarse downsampling factor
    m_c: float = 13.0  # coarse bound, in pixels at coarse resolution
    m_f: float = 6.0  # fine residual bound, in pixels at full resolution
    mu: float = MU_DEFAULT

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"coarse factor must be >= 1, got {self.d}")
        if self.m_c <= 0 or self.m_f <= 0:
            raise ParameterError("shift bounds must be positive")

    @property
    def max_shift(self) -> float:
        return self.d * self.m_c + self.m_f


def _feature_into(img: LinearImage, mu: float, slab: np.ndarray, base: int, lum: np.ndarray) -> None:
    w_r, w_g, w_b = LUMA_WEIGHTS
    tm = tone_map_mu(img.data, mu)
    _kernels.align_feature_planes(tm, float(NORM_EPS), w_r, w_g, w_b, slab, base, lum)


def align_feature(img: LinearImage, mu: float = MU_DEFAULT) -> np.ndarray:
    """4-channel alignment feature as planar (4, H, W).

    Channels 0-2: tone-mapped RGB standardized jointly over all pixels and
    channels (zero mean, unit-ish variance), which cancels residual exposure
    differences. Channel 3: gradient magnitude of the standardized luma.
    """
    if img.channels != 3:
        raise ParameterError(f"alignment feature needs 3 channels, got {img.channels}")
    if not (mu > 0):
        raise ParameterError(f"mu must be > 0, got {mu}")
    out = np.empty((4, img.height, img.width), dtype=np.float32)
    lum = np.empty((img.height, img.width), dtype=np.float32)
    _feature_into(img, mu, out, 0, lum)
    return out


def build_align_input(phi_a: np.ndarray, phi_b: np.ndarray) -> np.ndarray:
    """Stack (phi_A, phi_B, phi_A - phi_B) into the 12-channel alignment input."""
    if phi_a.shape != phi_b.shape:
        raise ParameterError(f"feature shapes differ: {phi_a.shape} vs {phi_b.shape}")
    return np.concatenate([phi_a, phi_b, phi_a - phi_b], axis=0)


def predict_shift_parts(
    i_b: LinearImage, i_a: LinearImage, nets: NetStack, cfg: AlignConfig = AlignConfig()
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predict the shift field and return (total, coarse, fine) as (H, W, 2) arrays."""
    if i_a.data.shape != i_b.data.shape:
        raise ParameterError(f"frame shapes differ: {i_a.data.shape} vs {i_b.data.shape}")
    h, w = i_b.height, i_b.width

    # One 12-channel slab holds (phi_A, phi_B, phi_A - phi_B); the fine stage
    # reuses the phi_B slice and rewrites the other two in place.
    slab = np.empty((12, h, w), dtype=np.float32)
    lum = np.empty((h, w), dtype=np.float32)
    _feature_into(i_a, cfg.mu, slab, 0, lum)
    _feature_into(i_b, cfg.mu, slab, 4, lum)
    np.subtract(slab[0:4], slab[4:8], out=slab[8:12])

    # Coarse: bounded shift at 1/d resolution, upsampled and rescaled.
    coarse_in = avg_downsample(slab, cfg.d)
    s_c_low = np.float32(cfg.m_c) * forward(COARSE_SPEC, nets.coarse, coarse_in)
    s_c = np.float32(cfg.d) * bilinear_upsample(s_c_low, cfg.d)[:, :h, :w]

    # Fine: bounded residual on the coarse-warped alternate.
    shift_c = np.ascontiguousarray(np.moveaxis(s_c, 0, -1))
    i_a_coarse, _ = bilinear_warp(i_a, shift_c)
    _feature_into(i_a_coarse, cfg.mu, slab, 0, lum)
    np.subtract(slab[0:4], slab[4:8], out=slab[8:12])
    s_f = np.float32(cfg.m_f) * forward(FINE_SPEC, nets.fine, slab)

    shift_f = np.moveaxis(s_f, 0, -1)
    return shift_c + shift_f, shift_c, shift_f


def predict_shift(
    i_b: LinearImage, i_a: LinearImage, nets: NetStack, cfg: AlignConfig = AlignConfig()
) -> np.ndarray:
    """Predict the dense (H, W, 2) shift field registering i_a onto i_b.

    Both frames must already be normalized to the same reference exposure.
    """
    total, _, _ = predict_shift_parts(i_b, i_a, nets, cfg)
    return total


def align(
    i_b: LinearImage, i_a: LinearImage, nets: NetStack, cfg: AlignConfig = AlignConfig()
) -> tuple[LinearImage, np.ndarray, np.ndarray]:
    """Warp i_a onto i_b: returns (warped frame, warp validity, shift field)."""
    shift = predict_shift(i_b, i_a, nets, cfg)
    warped, validity = bilinear_warp(i_a, shift)
    return warped, validity, shift
