"""Per-pixel convex blending of a base frame with a warped alternate.

The merge network sees raw linear intensities plus a gamma-space luma cue
(deliberately not the standardized alignment features: absolute brightness is
the signal here, it is what distinguishes clipped from usable pixels). Its
two-channel logits become convex weights through a softmax; the alternate's
weight is then gated by the warp validity mask and the pair renormalized, so
the output remains a convex combination of valid observed pixels. Softmax
positivity guarantees w_B > 0, so the renormalization can never divide by
zero even under zero validity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constants import GAMMA_DEFAULT
from .errors import ParameterError
from .imaging import LinearImage, gamma_encode, luma
from .nets import MERGE_SPEC, NetStack
from .tinycnn import forward, softmax_channels


@dataclass
class MergeWeights:
    """Convex per-pixel weight pair: w_b + w_a = 1, both >= 0, w_a = 0 where invalid."""

    w_b: np.ndarray  # (H, W) float32
    w_a: np.ndarray

    def __post_init__(self):
        if self.w_b.shape != self.w_a.shape:
            raise ParameterError(f"weight shapes differ: {self.w_b.shape} vs {self.w_a.shape}")


def _merge_feature_into(img: LinearImage, gamma: float, slab: np.ndarray, base: int) -> None:
    _kernels.plane_split(np.ascontiguousarray(img.data), slab, base)
    slab[base + 3] = luma(gamma_encode(img, gamma))


def merge_feature(img: LinearImage, gamma: float = GAMMA_DEFAULT) -> np.ndarray:
    """4-channel merge feature as planar (4, H, W): raw RGB + gamma-space luma."""
    if img.channels != 3:
        raise ParameterError(f"merge feature needs 3 channels, got {img.channels}")
    out = np.empty((4, img.height, img.width), dtype=np.float32)
    _merge_feature_into(img, gamma, out, 0)
    return out


def gate_and_normalize(w_b: np.ndarray, w_a: np.ndarray, validity: np.ndarray) -> MergeWeights:
    """Multiply w_a by validity and renormalize the pair to sum to one."""
    wb = w_b.astype(np.float64)
    wa = w_a.astype(np.float64) * np.asarray(validity, dtype=np.float64)
    total = wb + wa
    return MergeWeights((wb / total).astype(np.float32), (wa / total).astype(np.float32))


def merge_weights(
    psi_b: np.ndarray, psi_a: np.ndarray, validity: np.ndarray, nets: NetStack
) -> MergeWeights:
    """Predict gated, renormalized convex weights from base/alternate merge features."""
    if psi_b.shape != psi_a.shape:
        raise ParameterError(f"feature shapes differ: {psi_b.shape} vs {psi_a.shape}")
    logits = forward(MERGE_SPEC, nets.merge, np.concatenate([psi_b, psi_a], axis=0))
    probs = softmax_channels(logits)
    return gate_and_normalize(probs[0], probs[1], validity)


def predict_weights(
    i_b: LinearImage, i_a_warped: LinearImage, validity: np.ndarray, nets: NetStack, gamma: float = GAMMA_DEFAULT
) -> MergeWeights:
    """merge_weights over the two frames, building the feature slab in place."""
    slab = np.empty((8, i_b.height, i_b.width), dtype=np.float32)
    _merge_feature_into(i_b, gamma, slab, 0)
    _merge_feature_into(i_a_warped, gamma, slab, 4)
    probs = softmax_channels(forward(MERGE_SPEC, nets.merge, slab))
    return gate_and_normalize(probs[0], probs[1], validity)


def fuse(i_b: LinearImage, i_a_warped: LinearImage, w: MergeWeights) -> LinearImage:
    """Per-pixel convex combination w_b*I_B + w_a*I_A.

    Computed as I_B + w_a*(I_A - I_B) in float64 so identical inputs fuse to
    themselves exactly and outputs never leave [min, max] of the two sources.
    """
    if i_b.data.shape != i_a_warped.data.shape:
        raise ParameterError(f"frame shapes differ: {i_b.data.shape} vs {i_a_warped.data.shape}")
    if w.w_b.shape != i_b.data.shape[:2]:
        raise ParameterError(f"weight shape {w.w_b.shape} does not match frames {i_b.data.shape[:2]}")
    out = np.empty_like(i_b.data)
    _kernels.fuse_convex(
        np.ascontiguousarray(i_b.data), np.ascontiguousarray(i_a_warped.data), np.ascontiguousarray(w.w_a), out
    )
    return LinearImage(out, exposure_scale=i_b.exposure_scale)
