"""Iterative short-to-long align-and-merge, training-loss metrics and evaluation.

The fused estimate starts as the shortest (base) frame; every later frame is
exposure-normalized to the base, aligned against the current estimate, and
blended in with gated convex weights. One weight stack serves every
iteration. Because each step is a per-pixel convex combination of the running
estimate and warped observed pixels, the final value at any pixel expands
into a non-negative combination of input-stack pixels with total mass <= 1;
``audit_convexity`` replays that expansion from the recorded trace to verify
it numerically.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .align import AlignConfig, align
from .constants import MU_DEFAULT
from .dataset import LoadedSample, sample_dirs
from .errors import ParameterError
from .imaging import LinearImage, bilinear_warp, exposure_normalize, psnr, tone_map_mu
from .merge import MergeWeights, fuse, gate_and_normalize, predict_weights
from .nets import NetStack
from .tinycnn import softmax_channels


@dataclass
class IterationRecord:
    frame_index: int
    exposure_ratio: float
    shift: np.ndarray  # (H, W, 2)
    validity: np.ndarray  # (H, W)
    weights: MergeWeights
    frame_norm: LinearImage  # incoming frame at base exposure
    warped: LinearImage

    @property
    def shift_mean(self) -> float:
        return float(np.abs(self.shift).mean())

    @property
    def shift_max(self) -> float:
        return float(np.abs(self.shift).max())

    @property
    def mean_w_a(self) -> float:
        return float(self.weights.w_a.mean())

    @property
    def validity_coverage(self) -> float:
        return float(self.validity.mean())


@dataclass
class MergeTrace:
    base: LinearImage
    iterations: list = field(default_factory=list)
    estimate: LinearImage = None

    def summary(self) -> list:
        return [
            {
                "frame_index": rec.frame_index,
                "exposure_ratio": rec.exposure_ratio,
                "shift_mean": rec.shift_mean,
                "shift_max": rec.shift_max,
                "mean_w_a": rec.mean_w_a,
                "validity_coverage": rec.validity_coverage,
            }
            for rec in self.iterations
        ]


def iterative_merge(
    frames: list,
    nets: NetStack,
    cfg: AlignConfig = AlignConfig(),
    shift_override=None,
    weight_fn=None,
) -> MergeTrace:
    """Fuse a short-to-long burst into one estimate at the base frame's exposure.

    frames: LinearImage list with non-decreasing exposure_scale (base first).
    shift_override: optional ``f(iteration_index, frame_index) -> (H, W, 2)``
        replacing the alignment networks (ground-truth injection).
    weight_fn: optional ``f(estimate, warped, validity, frame_native) -> (2, H, W)``
        logits replacing the merge network; gating and renormalization still
        apply, so the convexity guarantees are preserved.
    """
    if len(frames) < 2:
        raise ParameterError(f"need at least 2 frames, got {len(frames)}")
    exposures = [f.exposure_scale for f in frames]
    if any(b < a for a, b in zip(exposures, exposures[1:])):
        raise ParameterError(f"frames must be ordered short to long, got exposures {exposures}")

    e_base = exposures[0]
    base = exposure_normalize(frames[0], e_base)
    trace = MergeTrace(base=base)
    estimate = base
    for it, frame in enumerate(frames[1:], start=1):
        frame_norm = exposure_normalize(frame, e_base)
        if shift_override is not None:
            shift = np.ascontiguousarray(shift_override(it - 1, it), dtype=np.float32)
            if shift.shape == (2,):
                shift = np.broadcast_to(shift, (frame_norm.height, frame_norm.width, 2)).copy()
            warped, validity = bilinear_warp(frame_norm, shift)
        else:
            warped, validity, shift = align(estimate, frame_norm, nets, cfg)

        if weight_fn is not None:
            logits = weight_fn(estimate, warped, validity, frame)
            probs = softmax_channels(np.asarray(logits, dtype=np.float32))
            w = gate_and_normalize(probs[0], probs[1], validity)
        else:
            w = predict_weights(estimate, warped, validity, nets)

        new_estimate = fuse(estimate, warped, w)
        trace.iterations.append(
            IterationRecord(
                frame_index=it,
                exposure_ratio=frame.exposure_scale / e_base,
                shift=shift,
                validity=validity,
                weights=w,
                frame_norm=frame_norm,
                warped=warped,
            )
        )
        estimate = new_estimate
    trace.estimate = estimate
    return trace


def _warp_taps(shift: np.ndarray, h: int, w: int, y: int, x: int) -> list:
    """In-bounds bilinear taps (yy, xx, weight) for output pixel (y, x), float64."""
    sx = x + float(shift[y, x, 0])
    sy = y + float(shift[y, x, 1])
    x0 = math.floor(sx)
    y0 = math.floor(sy)
    fx = sx - x0
    fy = sy - y0
    taps = []
    for yy, xx, wt in (
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x0 + 1, fx * (1.0 - fy)),
        (y0 + 1, x0, (1.0 - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ):
        if 0 <= yy < h and 0 <= xx < w:
            taps.append((yy, xx, wt))
    return taps


def audit_convexity(trace: MergeTrace, n_pixels: int = 1000, seed: int = 0, tol: float = 1e-5):
    """Replay the recorded convex combinations at sampled pixels.

    For each sampled pixel the final estimate is rebuilt from the base frame
    and the per-iteration warp taps and gated weights, checking that (a) the
    replayed value matches the actual output within ``tol``, (b) every
    expansion coefficient is non-negative, and (c) the coefficients sum to at
    most 1 (boundary taps may lose mass, never gain it).

    Returns (ok, max_abs_error).
    """
    h, w = trace.base.height, trace.base.width
    c = trace.base.channels
    rng = np.random.default_rng(seed)
    n = min(n_pixels, h * w)
    idx = rng.choice(h * w, size=n, replace=False)
    ys, xs = np.divmod(idx, w)

    max_err = 0.0
    ok = True
    for y, x in zip(ys, xs):
        value = trace.base.data[y, x].astype(np.float64)
        coeff_mass = 1.0  # total expansion mass at this pixel
        for rec in trace.iterations:
            taps = _warp_taps(rec.shift, h, w, y, x)
            warped_val = np.zeros(c, dtype=np.float64)
            tap_mass = 0.0
            for yy, xx, wt in taps:
                if wt < 0:
                    ok = False
                warped_val += wt * rec.frame_norm.data[yy, xx].astype(np.float64)
                tap_mass += wt
            w_b = float(rec.weights.w_b[y, x])
            w_a = float(rec.weights.w_a[y, x])
            if w_b < 0 or w_a < 0:
                ok = False
            value = w_b * value + w_a * warped_val
            coeff_mass = w_b * coeff_mass + w_a * tap_mass
        # stored weights are float32, so each iteration can overshoot a sum of
        # 1 by about one float32 ulp
        if coeff_mass > 1.0 + 1e-6 * (1 + len(trace.iterations)):
            ok = False
        err = float(np.abs(value - trace.estimate.data[y, x].astype(np.float64)).max())
        max_err = max(max_err, err)
    return ok and max_err <= tol, max_err


def loss_pred(h_hat, h_gt, mu: float = MU_DEFAULT) -> float:
    """Mean absolute tone-mapped difference between prediction and reference."""
    a = tone_map_mu(h_hat, mu)
    b = tone_map_mu(h_gt, mu)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def loss_warp(warped: list, noshift: list, masks: list) -> float:
    """Masked mean absolute warp error summed over alternate frames.

    Each frame contributes mean_c |warped - noshift| averaged over valid
    pixels; a frame whose mask is entirely zero contributes 0 with a warning.
    """
    if not (len(warped) == len(noshift) == len(masks)):
        raise ParameterError("warped/noshift/mask lists must have equal length")
    total = 0.0
    for i, (wi, ni, mi) in enumerate(zip(warped, noshift, masks)):
        a = wi.data if isinstance(wi, LinearImage) else np.asarray(wi)
        b = ni.data if isinstance(ni, LinearImage) else np.asarray(ni)
        m = np.asarray(mi, dtype=np.float64)
        denom = float(m.sum())
        if denom == 0.0:
            warnings.warn(f"warp loss: frame {i} has an all-zero validity mask, contributing 0")
            continue
        diff = np.abs(a.astype(np.float64) - b.astype(np.float64)).mean(axis=2)
        total += float((m * diff).sum() / denom)
    return total


def loss_var(shifts: list) -> float:
    """Sum over frames of the spatial variance of dx plus that of dy."""
    if not shifts:
        raise ParameterError("need at least one shift field")
    total = 0.0
    for s in shifts:
        arr = np.asarray(s, dtype=np.float64)
        total += float(arr[:, :, 0].var() + arr[:, :, 1].var())
    return total


def evaluate_sample(sample: LoadedSample, nets: NetStack, cfg: AlignConfig = AlignConfig(), audit_pixels: int = 1000) -> dict:
    """Merge one dataset sample and compute its metrics record."""
    t0 = time.perf_counter()
    trace = iterative_merge(sample.frames, nets, cfg)
    elapsed_ms = (time.perf_counter() - t0) * 1e3

    e_base = sample.frames[0].exposure_scale
    h_full = exposure_normalize(trace.estimate, 1.0)
    base_full = exposure_normalize(trace.base, 1.0)
    gt = sample.gt_hdr

    noshift_norm = [exposure_normalize(t, e_base) for t in sample.noshift_targets[1:]]
    l_warp = loss_warp([rec.warped for rec in trace.iterations], noshift_norm, sample.validity_masks[1:])
    convex_ok, convex_err = audit_convexity(trace, n_pixels=audit_pixels)

    return {
        "sample_id": sample.sample_id,
        "psnr_l": psnr(h_full, gt, "linear"),
        "psnr_mu": psnr(h_full, gt, "mu"),
        "psnr_l_base": psnr(base_full, gt, "linear"),
        "psnr_mu_base": psnr(base_full, gt, "mu"),
        "l_pred": loss_pred(h_full, gt),
        "l_warp": l_warp,
        "l_var": loss_var([rec.shift for rec in trace.iterations]),
        "convexity_ok": bool(convex_ok),
        "convexity_err": convex_err,
        "ms_per_merge": elapsed_ms,
    }


def evaluate(dataset_dir, nets: NetStack, cfg: AlignConfig = AlignConfig(), threads: int = 1, audit_pixels: int = 1000):
    """Evaluate every readable sample in a dataset directory.

    Returns (rows, aggregate, errors): per-sample records sorted by id, mean
    metrics over samples, and a list of (sample_dir, message) for samples
    that failed to load or merge.
    """
    rows, errors = [], []
    dirs = sample_dirs(dataset_dir)

    def run_one(path):
        sample = LoadedSample(path)
        return evaluate_sample(sample, nets, cfg, audit_pixels)

    if threads > 1 and len(dirs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(run_one, d): d for d in dirs}
            for fut, d in futures.items():
                try:
                    rows.append(fut.result())
                except Exception as e:  # noqa: BLE001 - record and continue
                    errors.append((str(d), f"{type(e).__name__}: {e}"))
    else:
        for d in dirs:
            try:
                rows.append(run_one(d))
            except Exception as e:  # noqa: BLE001 - record and continue
                errors.append((str(d), f"{type(e).__name__}: {e}"))

    rows.sort(key=lambda r: r["sample_id"])
    aggregate = {}
    if rows:
        for key in ("psnr_l", "psnr_mu", "psnr_l_base", "psnr_mu_base", "l_pred", "l_warp", "l_var", "ms_per_merge"):
            finite = [r[key] for r in rows if math.isfinite(r[key])]
            aggregate[key] = float(np.mean(finite)) if finite else math.inf
        aggregate["convexity_pass_rate"] = float(np.mean([r["convexity_ok"] for r in rows]))
        aggregate["count"] = len(rows)
    return rows, aggregate, errors
