"""Synthetic bracketed-burst generation with motion, noise and blur.

A burst is derived from one clean HDR image in five stages: (1) a polygon-
masked foreground patch is flipped and composited at a per-frame translation
to synthesize unalignable local motion, (2) each frame is re-exposed on an
exposure ladder, (3) shot/read noise with signal-dependent variance is added,
(4, 5) foreground and background receive separate motion blur whose radius
scales with exposure time. A global hand-shake translation is applied last by
bilinear resampling; the same pipeline without that translation yields the
per-frame no-shift targets used as alignment supervision.

Everything is driven by one numpy Generator, so a (source, config, seed)
triple reproduces a burst bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, ParameterError
from .imaging import LinearImage, NoiseModel


@dataclass(frozen=True)
class SimConfig:
    n_frames: int = 5
    exposure_step_ev: float | None = None  # None: sampled from {2, 3} per burst
    ns_range: tuple[float, float] = (1e-5, 1e-3)
    no_range: tuple[float, float] = (1e-7, 1e-5)
    shift_mixture: tuple[float, float, float] = (0.05, 2.0, 16.0)  # (p, m_s, m_l)
    blur_prob: float = 0.3
    bg_blur_max: float = 5.0
    fg_blur_max: float = 7.0
    unmatchable_shift_px: float = 7.0
    powerlaw_range: tuple[float, float] = (1.0, 1.5)
    seed: int = 0
    # Artifact knobs (declared defaults, all overridable):
    bit_depth: int | None = 12  # quantization levels = 2^bit_depth; None disables
    clip_fraction_range: tuple[float, float] = (0.05, 0.25)  # longest-frame clipped mass
    fg_enabled: bool = True
    fg_translation_range: tuple[float, float] = (8.0, 40.0)  # per-frame step, px
    fg_vertex_range: tuple[int, int] = (5, 10)
    fg_radius_range: tuple[float, float] = (0.10, 0.25)  # fraction of image height
    integer_shifts: bool = False  # round global shifts to whole pixels

    def __post_init__(self):
        if self.n_frames < 2:
            raise ParameterError(f"need at least 2 frames, got {self.n_frames}")
        for name in ("ns_range", "no_range", "powerlaw_range", "clip_fraction_range", "fg_translation_range", "fg_radius_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise ParameterError(f"{name} is inverted: {lo} > {hi}")
        p, m_s, m_l = self.shift_mixture
        if not (0.0 <= p <= 1.0) or m_s < 0 or m_l < 0:
            raise ParameterError(f"bad shift mixture {self.shift_mixture}")
        if not (0.0 <= self.blur_prob <= 1.0):
            raise ParameterError(f"blur_prob must be in [0, 1], got {self.blur_prob}")


@dataclass
class BurstSample:
    """One simulated bracket with its supervision targets and masks."""

    frames: list  # LinearImage, ordered short -> long exposure
    noshift_targets: list  # same pipeline minus the global translation
    validity_masks: list  # (H, W) float32 per frame
    fg_mask: np.ndarray  # union of per-frame foreground support
    gt_hdr: LinearImage  # clean composite at the base frame's foreground position
    gt_shifts: list  # (dx, dy) content translation per frame; base is (0, 0)
    base_index: int
    noise: NoiseModel = field(default_factory=NoiseModel)
    step_ev: float = 0.0
    blurred: list = field(default_factory=list)
    unmatchable: list = field(default_factory=list)

    @property
    def exposures(self) -> list:
        return [f.exposure_scale for f in self.frames]


def prepare_hdr(source: LinearImage, rng: np.random.Generator, powerlaw_range=(1.0, 1.5)) -> LinearImage:
    """Normalize an HDR source by its 99.9th percentile and apply a random power law."""
    src = source.data.astype(np.float64)
    if src.min() < 0:
        raise ParameterError("HDR source must be non-negative")
    p = float(np.percentile(src, 99.9))
    if p <= 0.0:
        raise DegenerateInputError("HDR source is all zeros")
    q = float(rng.uniform(powerlaw_range[0], powerlaw_range[1]))
    out = np.clip(src / p, 0.0, 1.0) ** q
    return LinearImage(out.astype(np.float32), exposure_scale=1.0)


def expose_frame(
    h: LinearImage,
    e: float,
    noise: NoiseModel,
    rng: np.random.Generator,
    bit_depth: int | None = 12,
) -> LinearImage:
    """Re-expose a clean image: x = e*H, Gaussian noise with var a*x + b, clamp, quantize."""
    if not (e > 0):
        raise ParameterError(f"exposure must be > 0, got {e}")
    x = e * h.data.astype(np.float64)
    std = np.sqrt(noise.a * x + noise.b)
    v = x + rng.standard_normal(x.shape) * std
    np.clip(v, 0.0, 1.0, out=v)
    if bit_depth:
        levels = (1 << bit_depth) - 1
        v = np.rint(v * levels) / levels
    return LinearImage(v.astype(np.float32), exposure_scale=float(e))


def sample_global_shift(rng: np.random.Generator, mixture=(0.05, 2.0, 16.0)) -> tuple[float, float]:
    """Two-component uniform hand-shake mixture: large square with probability p, small otherwise."""
    p, m_s, m_l = mixture
    m = m_l if rng.random() < p else m_s
    dx, dy = rng.uniform(-m, m, size=2)
    return float(dx), float(dy)


def polygon_mask(height: int, width: int, vertices: np.ndarray) -> np.ndarray:
    """Rasterize a polygon by the even-odd crossing rule at pixel centers.

    vertices: (N, 2) array of (x, y). Returns a float32 {0, 1} mask.
    """
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise ParameterError(f"vertices must be (N, 2), got {verts.shape}")
    mask = np.zeros((height, width), dtype=bool)
    if len(verts) < 3:
        return mask.astype(np.float32)
    px = np.arange(width, dtype=np.float64)[None, :]
    py = np.arange(height, dtype=np.float64)[:, None]
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        mask ^= crosses & (px < xi)
    return mask.astype(np.float32)


def sample_polygon(
    rng: np.random.Generator, height: int, width: int, vertex_range=(5, 10), radius_range=(0.10, 0.25)
) -> np.ndarray:
    """Star-shaped polygon around a random center with jittered per-vertex radii."""
    nv = int(rng.integers(vertex_range[0], vertex_range[1] + 1))
    cx = rng.uniform(0, width)
    cy = rng.uniform(0, height)
    base_r = rng.uniform(radius_range[0], radius_range[1]) * height
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, nv))
    radii = rng.uniform(0.5, 1.0, nv) * base_r
    return np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)


def _translate(data: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Move content by (+dx, +dy) with bilinear resampling and zero padding."""
    if dx == 0.0 and dy == 0.0:
        return data.copy()
    h, w = data.shape[:2]
    squeeze = data.ndim == 2
    arr = data[:, :, None] if squeeze else data
    shift = np.empty((h, w, 2), dtype=np.float32)
    shift[:, :, 0] = -dx
    shift[:, :, 1] = -dy
    out = np.empty_like(arr)
    validity = np.empty((h, w), dtype=np.float32)
    _kernels.warp_bilinear(np.ascontiguousarray(arr), shift, out, validity)
    return out[:, :, 0] if squeeze else out


def composite_with_mask(h: LinearImage, mask: np.ndarray, translations) -> tuple[list, np.ndarray, list]:
    """Composite the flipped image over the background through a translated mask.

    Returns per-frame clean scenes, the union of the translated supports, and
    the per-frame soft masks.
    """
    content = np.ascontiguousarray(h.data[:, ::-1, :])  # horizontal flip
    scenes, masks = [], []
    union = np.zeros(mask.shape, dtype=np.float32)
    for dx, dy in translations:
        m = _translate(mask, dx, dy)
        fg = _translate(content, dx, dy)
        scene = m[:, :, None] * fg + (1.0 - m[:, :, None]) * h.data
        scenes.append(LinearImage(scene.astype(np.float32), exposure_scale=h.exposure_scale))
        masks.append(m)
        union = np.maximum(union, m)
    return scenes, union, masks


def composite_foreground(
    h: LinearImage,
    rng: np.random.Generator,
    n_frames: int = 1,
    translation_range=(8.0, 40.0),
    vertex_range=(5, 10),
    radius_range=(0.10, 0.25),
) -> tuple[list, np.ndarray, list, list]:
    """Add a moving flipped-patch foreground: scenes, union mask, translations, per-frame masks.

    The per-frame displacement is deliberately larger than anything the
    aligner is expected to recover, so downstream stages learn to ignore it.
    """
    verts = sample_polygon(rng, h.height, h.width, vertex_range, radius_range)
    mask = polygon_mask(h.height, h.width, verts)
    speed = rng.uniform(translation_range[0], translation_range[1])
    theta = rng.uniform(0.0, 2.0 * math.pi)
    step = (speed * math.cos(theta), speed * math.sin(theta))
    translations = [(step[0] * i, step[1] * i) for i in range(n_frames)]
    scenes, union, masks = composite_with_mask(h, mask, translations)
    return scenes, union, translations, masks


def motion_blur(img: LinearImage, radius_px: float, direction) -> LinearImage:
    """Line blur: average bilinear samples along a segment of length 2*radius.

    The kernel mass is exactly 1 (constants are unchanged); radius 0 is the
    identity. ``direction`` is normalized internally.
    """
    if radius_px < 0:
        raise ParameterError(f"blur radius must be >= 0, got {radius_px}")
    if radius_px == 0:
        return LinearImage(img.data.copy(), exposure_scale=img.exposure_scale)
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise ParameterError("blur direction must be a nonzero vector")
    dx, dy = dx / norm, dy / norm
    n_taps = 2 * math.ceil(radius_px) + 1
    offsets = np.linspace(-radius_px, radius_px, n_taps)
    out = np.empty_like(img.data)
    _kernels.motion_blur_line(np.ascontiguousarray(img.data), offsets * dx, offsets * dy, out)
    return LinearImage(out, exposure_scale=img.exposure_scale)


def _blur_mask(mask: np.ndarray, radius_px: float, dx: float, dy: float) -> np.ndarray:
    if radius_px == 0:
        return mask
    n_taps = 2 * math.ceil(radius_px) + 1
    offsets = np.linspace(-radius_px, radius_px, n_taps)
    arr = np.ascontiguousarray(mask[:, :, None])
    out = np.empty_like(arr)
    _kernels.motion_blur_line(arr, offsets * dx, offsets * dy, out)
    return out[:, :, 0]


def simulate_burst(source: LinearImage, cfg: SimConfig, rng: np.random.Generator | None = None) -> BurstSample:
    """Run the full burst simulation; deterministic for a given (source, cfg, seed)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    h = prepare_hdr(source, rng, cfg.powerlaw_range)
    step_ev = cfg.exposure_step_ev if cfg.exposure_step_ev is not None else float(rng.choice([2.0, 3.0]))

    # Shortest exposure is set so the longest frame clips a sampled fraction.
    clip_frac = rng.uniform(cfg.clip_fraction_range[0], cfg.clip_fraction_range[1])
    q = float(np.quantile(h.data, 1.0 - clip_frac))
    e_max = 1.0 / max(q, 1e-6)
    exposures = [e_max * 2.0 ** (step_ev * (i - (cfg.n_frames - 1))) for i in range(cfg.n_frames)]

    if cfg.fg_enabled:
        scenes, fg_union, _, fg_masks = composite_foreground(
            h, rng, cfg.n_frames, cfg.fg_translation_range, cfg.fg_vertex_range, cfg.fg_radius_range
        )
    else:
        scenes = [h] * cfg.n_frames
        fg_union = np.zeros((h.height, h.width), dtype=np.float32)
        fg_masks = [fg_union] * cfg.n_frames

    ns = rng.uniform(cfg.ns_range[0], cfg.ns_range[1])
    no = rng.uniform(cfg.no_range[0], cfg.no_range[1])
    noise = NoiseModel(float(ns), float(no))

    base_validity = (fg_union <= 0.0).astype(np.float32)

    frames, noshift_targets, validity_masks = [], [], []
    gt_shifts, blurred_flags, unmatchable_flags = [], [], []
    for i, e in enumerate(exposures):
        exposed = expose_frame(scenes[i], e, noise, rng, cfg.bit_depth)

        blur_this = i > 0 and rng.random() < cfg.blur_prob
        if blur_this:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            dxu, dyu = math.cos(theta), math.sin(theta)
            r_bg = cfg.bg_blur_max * e / e_max
            r_fg = cfg.fg_blur_max * e / e_max
            bg_img = motion_blur(exposed, r_bg, (dxu, dyu))
            if cfg.fg_enabled:
                fg_img = motion_blur(exposed, r_fg, (dxu, dyu))
                m = _blur_mask(fg_masks[i], r_fg, dxu, dyu)
                noshift_data = (m[:, :, None] * fg_img.data + (1.0 - m[:, :, None]) * bg_img.data).astype(np.float32)
            else:
                noshift_data = bg_img.data
        else:
            noshift_data = exposed.data

        if i == 0:
            delta = (0.0, 0.0)
        else:
            delta = sample_global_shift(rng, cfg.shift_mixture)
            if cfg.integer_shifts:
                delta = (float(round(delta[0])), float(round(delta[1])))
        frame_data = _translate(noshift_data, delta[0], delta[1])

        unmatchable = max(abs(delta[0]), abs(delta[1])) > cfg.unmatchable_shift_px or blur_this
        validity = base_validity if not unmatchable else np.zeros_like(base_validity)

        frames.append(LinearImage(frame_data, exposure_scale=e))
        noshift_targets.append(LinearImage(noshift_data, exposure_scale=e))
        validity_masks.append(validity)
        gt_shifts.append(delta)
        blurred_flags.append(blur_this)
        unmatchable_flags.append(bool(unmatchable))

    return BurstSample(
        frames=frames,
        noshift_targets=noshift_targets,
        validity_masks=validity_masks,
        fg_mask=fg_union,
        gt_hdr=scenes[0] if cfg.fg_enabled else h,
        gt_shifts=gt_shifts,
        base_index=0,
        noise=noise,
        step_ev=step_ev,
        blurred=blurred_flags,
        unmatchable=unmatchable_flags,
    )
