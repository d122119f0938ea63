"""Core raster types and deterministic image operators.

Conventions used across the package:

- images are numpy float32 arrays of shape (H, W, C) with C in {1, 3},
  wrapped in :class:`LinearImage` when they carry an exposure scale;
- validity masks are float32 arrays of shape (H, W) with values in [0, 1]
  (1 = trustworthy sample);
- shift fields are float32 arrays of shape (H, W, 2) holding per-pixel
  (dx, dy) displacements in pixels; warping samples the source image at
  (x + dx, y + dy).

All operations are pure: inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constants import LUMA_WEIGHTS, MU_DEFAULT
from .errors import ParameterError


@dataclass
class LinearImage:
    """Exposure-normalized linear RGB (or gray) raster in [0, 1].

    ``exposure_scale`` records the relative exposure the values correspond to;
    rescaling between exposures is a multiplication followed by a clamp.
    """

    data: np.ndarray
    exposure_scale: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ParameterError(f"expected (H, W, C) raster with 1 or 3 channels, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ParameterError("image contains non-finite values")
        if not (self.exposure_scale > 0):
            raise ParameterError(f"exposure_scale must be > 0, got {self.exposure_scale}")
        self.data = arr
        self.exposure_scale = float(self.exposure_scale)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def _wrap(cls, data: np.ndarray, exposure_scale: float) -> "LinearImage":
        """Wrap without re-validating; for internal ops that preserve invariants."""
        obj = object.__new__(cls)
        obj.data = data
        obj.exposure_scale = exposure_scale
        return obj


@dataclass(frozen=True)
class NoiseModel:
    """Affine noise variance model sigma^2(x) = a*x + b in normalized units.

    ``a`` is the shot-noise slope, ``b`` the read-noise floor. Both may be
    zero together only for idealized noiseless simulation.
    """

    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ParameterError(f"noise coefficients must be finite and >= 0, got a={self.a} b={self.b}")

    def sigma(self, x):
        return np.sqrt(self.a * np.asarray(x, dtype=np.float64) + self.b)


def _values(img) -> np.ndarray:
    """Accept a LinearImage or a bare array and return the raster."""
    if isinstance(img, LinearImage):
        return img.data
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def normalize_raw(raw, black_level: int, white_level: int, exposure_scale: float = 1.0) -> LinearImage:
    """Map integer sensor counts to linear [0, 1] by black subtraction and range division."""
    if white_level <= black_level:
        raise ParameterError(f"white_level ({white_level}) must exceed black_level ({black_level})")
    arr = np.asarray(raw, dtype=np.float64)
    out = (arr - black_level) / (white_level - black_level)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return LinearImage(out, exposure_scale=exposure_scale)


def exposure_normalize(img: LinearImage, e_ref: float) -> LinearImage:
    """Rescale an image to a reference exposure and clamp to [0, 1]."""
    if not (e_ref > 0):
        raise ParameterError(f"reference exposure must be > 0, got {e_ref}")
    scale = np.float32(e_ref / img.exposure_scale)
    out = np.clip(img.data * scale, 0.0, 1.0)
    return LinearImage._wrap(out, float(e_ref))


def tone_map_mu(img, mu: float = MU_DEFAULT) -> np.ndarray:
    """Log tone curve log(1 + mu*max(x, 0)) / log(1 + mu), elementwise.

    Monotone on [0, 1] with fixed endpoints; negatives clamp to zero first.
    """
    if not (mu > 0):
        raise ParameterError(f"mu must be > 0, got {mu}")
    x = np.maximum(_values(img), 0.0)
    return (np.log1p(np.float32(mu) * x) * np.float32(1.0 / math.log1p(mu))).astype(np.float32)


def luma(img) -> np.ndarray:
    """Rec.709 luma of a 3-channel raster, returned as (H, W)."""
    arr = _values(img)
    if arr.shape[2] != 3:
        raise ParameterError(f"luma needs 3 channels, got {arr.shape[2]}")
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float32)
    return arr @ w


def gamma_encode(img, gamma: float) -> np.ndarray:
    """Elementwise x^(1/gamma) for non-negative rasters."""
    if not (gamma > 0):
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    arr = _values(img)
    if arr.min() < 0:
        raise ParameterError("gamma_encode requires non-negative values")
    return np.power(arr, np.float32(1.0 / gamma))


def grad_mag(chan: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a single-channel raster.

    Central differences on a replicate-padded field: exact for linear ramps on
    the interior, halved slope on the border rows/columns.
    """
    arr = np.asarray(chan, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ParameterError(f"grad_mag needs a single channel, got shape {arr.shape}")
    p = np.pad(arr, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) * np.float32(0.5)
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) * np.float32(0.5)
    return np.sqrt(gx * gx + gy * gy)


def bilinear_warp(img: LinearImage, shift: np.ndarray) -> tuple[LinearImage, np.ndarray]:
    """Warp an image by a dense shift field.

    Output pixel (y, x) is the bilinear sample of ``img`` at
    (x + shift[y,x,0], y + shift[y,x,1]). Out-of-bounds taps contribute zero;
    the returned validity mask holds the in-bounds bilinear weight mass, so 1
    means a fully valid sample and fractions soft-discount border pixels.
    """
    sf = np.ascontiguousarray(shift, dtype=np.float32)
    if sf.ndim != 3 or sf.shape[2] != 2 or sf.shape[:2] != (img.height, img.width):
        raise ParameterError(f"shift field shape {sf.shape} does not match image {img.data.shape[:2]}")
    if not np.isfinite(sf).all():
        raise ParameterError("shift field contains non-finite values")
    out = np.empty_like(img.data)
    validity = np.empty((img.height, img.width), dtype=np.float32)
    _kernels.warp_bilinear(np.ascontiguousarray(img.data), sf, out, validity)
    return LinearImage._wrap(out, img.exposure_scale), validity


def psnr(pred, ref, domain: str = "linear", mu: float = MU_DEFAULT) -> float:
    """PSNR in dB with peak 1.0; ``domain`` is "linear" or "mu".

    The mu domain tone-maps both rasters first. Identical inputs report +inf.
    """
    a = _values(pred)
    b = _values(ref)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch {a.shape} vs {b.shape}")
    if domain == "mu":
        a = tone_map_mu(a, mu)
        b = tone_map_mu(b, mu)
    elif domain != "linear":
        raise ParameterError(f"unknown PSNR domain {domain!r}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
