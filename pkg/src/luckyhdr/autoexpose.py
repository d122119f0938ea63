"""Viewfinder auto-exposure loss and bracket planning.

The AE loss trades highlight clipping against shadow noise: a soft clipping
score (sigmoid mass above ~0.9) minus a weighted log of the shadow SNR, where
the shadow level is the 15th-percentile intensity and the SNR follows the
affine noise model sigma^2(x) = a*x + b. The chosen reference exposure seeds
a bracket of EV offsets spanning [-2, +2]; each total exposure is factorized
as the longest possible shutter at base ISO, raising gain only past the 1 s
handheld limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DeviceLimitError, ParameterError
from .imaging import LinearImage, NoiseModel

# Soft clipping indicator: center/width chosen so 0.9 reads ~1.8% clipped and
# 1.0 reads ~98% clipped, matching a 0.9..1.0 transition band.
CLIP_SIGMOID_CENTER = 0.95
CLIP_SIGMOID_WIDTH = 0.0125

# clip_score above this triggers the exposure-halving branch.
CLIP_HALVING_THRESHOLD = 0.05

# Grid search for the reference exposure: log-spaced multipliers, 0.2 EV apart.
SEARCH_MULTIPLIER_RANGE = (1.0 / 16.0, 16.0)
SEARCH_GRID_POINTS = 41

SHADOW_PERCENTILE = 15.0
MIN_SHADOW_SNR_DB = 20.0
DEFAULT_LAMBDA = 0.05


@dataclass(frozen=True)
class DeviceLimits:
    base_iso: float = 100.0
    max_iso: float = 6400.0
    max_duration_s: float = 1.0


@dataclass(frozen=True)
class ExposureSettings:
    """Shutter duration and gain; total exposure is duration * (iso / base_iso)."""

    duration_s: float
    iso: float = 100.0
    base_iso: float = 100.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.duration_s > 1.0:
            raise ParameterError(f"duration must be in (0, 1] s, got {self.duration_s}")
        if self.iso < self.base_iso:
            raise ParameterError(f"iso {self.iso} below base {self.base_iso}")

    @property
    def total_exposure(self) -> float:
        return self.duration_s * (self.iso / self.base_iso)


@dataclass(frozen=True)
class BracketPlan:
    settings: tuple  # ExposureSettings, ordered short -> long
    reference_index: int
    ev_offsets: tuple
    warning: bool = False  # set when limits forced a clamp away from the request


def factorize_total_exposure(total: float, limits: DeviceLimits = DeviceLimits()) -> tuple[ExposureSettings, bool]:
    """Split a total exposure into (duration, iso), preferring long shutter at base ISO.

    Returns the settings and a flag telling whether device limits clamped the
    request (total not achievable).
    """
    if total <= 0:
        raise ParameterError(f"total exposure must be > 0, got {total}")
    duration = min(total, limits.max_duration_s)
    gain = total / duration
    iso = limits.base_iso * gain
    clamped = False
    if iso > limits.max_iso:
        iso = limits.max_iso
        clamped = True
    return ExposureSettings(duration_s=duration, iso=iso, base_iso=limits.base_iso), clamped


def shadow_snr(v: LinearImage, noise: NoiseModel) -> float:
    """Shadow SNR S = x / sigma(x) at the 15th-percentile intensity."""
    x = float(np.percentile(v.data, SHADOW_PERCENTILE))
    return predicted_shadow_snr(x, noise)


def predicted_shadow_snr(x: float, noise: NoiseModel) -> float:
    """SNR of the affine noise model at intensity x; 0 at x = 0, inf if noiseless."""
    if x <= 0.0:
        return 0.0
    sigma = math.sqrt(noise.a * x + noise.b)
    if sigma == 0.0:
        return math.inf
    return x / sigma


def clip_score(v) -> float:
    """Mean soft clipping indicator over all intensity samples."""
    arr = v.data if isinstance(v, LinearImage) else np.asarray(v)
    z = (arr.astype(np.float64) - CLIP_SIGMOID_CENTER) / CLIP_SIGMOID_WIDTH
    return float(np.mean(1.0 / (1.0 + np.exp(-z))))


def ae_loss(v: LinearImage, noise: NoiseModel, lam: float = DEFAULT_LAMBDA) -> float:
    """AE loss C(V) - lambda * log S(V); +inf when the shadows carry no signal."""
    s = shadow_snr(v, noise)
    c = clip_score(v)
    if s == 0.0:
        return math.inf if lam > 0 else c
    if math.isinf(s):
        return -math.inf if lam > 0 else c
    return c - lam * math.log(s)


def _scaled_loss(values: np.ndarray, shadow: float, noise: NoiseModel, lam: float, m: float) -> float:
    """AE loss of the synthetically re-exposed frame clip(V*m)."""
    scaled = np.clip(values * m, 0.0, 1.0)
    z = (scaled - CLIP_SIGMOID_CENTER) / CLIP_SIGMOID_WIDTH
    c = float(np.mean(1.0 / (1.0 + np.exp(-z))))
    s = predicted_shadow_snr(min(shadow * m, 1.0), noise)
    if s == 0.0:
        return math.inf if lam > 0 else c
    if math.isinf(s):
        return -math.inf if lam > 0 else c
    return c - lam * math.log(s)


def select_reference_exposure(
    v: LinearImage,
    current: ExposureSettings,
    noise: NoiseModel,
    lam: float = DEFAULT_LAMBDA,
    limits: DeviceLimits = DeviceLimits(),
) -> ExposureSettings:
    """Choose the total exposure minimizing the AE loss, estimated by rescaling V.

    A significantly clipped frame is first driven back by halving the total
    exposure (at most 20 times); otherwise a deterministic log-spaced grid of
    multipliers is searched and the minimizer returned, clamped to device
    limits.
    """
    values = v.data.astype(np.float64)
    if clip_score(v) > CLIP_HALVING_THRESHOLD:
        m = 1.0
        for _ in range(20):
            m *= 0.5
            if clip_score(np.clip(values * m, 0.0, 1.0)) <= CLIP_HALVING_THRESHOLD:
                settings, _ = factorize_total_exposure(current.total_exposure * m, limits)
                return settings
        raise DeviceLimitError("scene still clipped after 20 exposure halvings")

    shadow = float(np.percentile(values, SHADOW_PERCENTILE))
    lo, hi = SEARCH_MULTIPLIER_RANGE
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), SEARCH_GRID_POINTS))
    losses = [_scaled_loss(values, shadow, noise, lam, m) for m in grid]
    best = int(np.argmin(losses))
    settings, _ = factorize_total_exposure(current.total_exposure * float(grid[best]), limits)
    return settings


def plan_bracket(
    reference: ExposureSettings,
    noise: NoiseModel,
    n: int = 5,
    shadow_level: float | None = None,
    limits: DeviceLimits = DeviceLimits(),
) -> BracketPlan:
    """Plan n frames spanning [-2, +2] EV around the reference, short to long.

    ``shadow_level`` is the 15th-percentile intensity observed at the
    reference exposure; when given, the whole bracket is raised (span
    preserved) until the shortest frame's predicted shadow SNR reaches 20 dB,
    as far as device limits allow. Totals are factorized duration-first; ISO
    rises above base only when a frame would need more than the 1 s handheld
    ceiling.
    """
    if n < 1:
        raise ParameterError(f"bracket needs at least 1 frame, got {n}")
    offsets = np.array([0.0]) if n == 1 else np.linspace(-2.0, 2.0, n)
    totals = reference.total_exposure * np.exp2(offsets)

    warning = False
    if shadow_level is not None and noise.a + noise.b > 0:
        x_short = shadow_level * float(totals[0]) / reference.total_exposure
        target_s = 10.0 ** (MIN_SHADOW_SNR_DB / 20.0)
        # Smallest x with x / sqrt(a*x + b) >= target_s.
        a, b, s2 = noise.a, noise.b, target_s**2
        x_needed = (s2 * a + math.sqrt((s2 * a) ** 2 + 4.0 * s2 * b)) / 2.0
        if x_short < x_needed and x_short > 0:
            raise_factor = x_needed / x_short
            ceiling = limits.max_duration_s * (limits.max_iso / limits.base_iso)
            if float(totals[-1]) * raise_factor > ceiling:
                raise_factor = ceiling / float(totals[-1])
                warning = True
            totals = totals * raise_factor

    settings = []
    for total in totals:
        s, clamped = factorize_total_exposure(float(total), limits)
        warning = warning or clamped
        settings.append(s)
    return BracketPlan(
        settings=tuple(settings),
        reference_index=int(np.argmin(np.abs(offsets))),
        ev_offsets=tuple(float(o) for o in offsets),
        warning=warning,
    )
