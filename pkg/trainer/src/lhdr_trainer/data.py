"""Burst dataset loading, cropping, batching, and the motion curriculum.

Samples are read from the runtime's dataset layout (frames_i.pfm + sidecar,
noshift_i.pfm, mask_i.pfm, gt.pfm, manifest.json). Everything is preloaded
into memory as base-exposure-normalized float32 arrays; batches are random
crops. The Phase II curriculum applies extra per-frame translations to the
already-shifted frames, widening the range over training.
"""

from __future__ import annotations

import math
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .formats import load_manifest, read_pfm, read_sidecar, write_pfm


@dataclass
class Sample:
    frames: np.ndarray  # (N, 3, H, W) base-normalized
    noshift: np.ndarray  # (N, 3, H, W) base-normalized
    masks: np.ndarray  # (N, 1, H, W)
    gt: np.ndarray  # (3, H, W), unit exposure
    e_base: float
    gt_shifts: np.ndarray  # (N, 2) content translations (dx, dy)


def load_sample(sample_dir) -> Sample:
    manifest = load_manifest(sample_dir)
    n = int(manifest["n_frames"])
    exposures = [float(e) for e in manifest["exposures"]]
    e_base = exposures[0]
    frames, noshift, masks = [], [], []
    for i in range(n):
        scale = e_base / exposures[i]
        meta = read_sidecar(Path(sample_dir) / f"frames_{i}.txt")
        assert abs(float(meta["exposure_scale"]) - exposures[i]) < 1e-9 * max(1.0, exposures[i])
        frames.append(np.clip(read_pfm(Path(sample_dir) / f"frames_{i}.pfm") * scale, 0.0, 1.0))
        noshift.append(np.clip(read_pfm(Path(sample_dir) / f"noshift_{i}.pfm") * scale, 0.0, 1.0))
        masks.append(read_pfm(Path(sample_dir) / f"mask_{i}.pfm")[:, :, :1])
    return Sample(
        frames=np.stack([f.transpose(2, 0, 1) for f in frames]).astype(np.float32),
        noshift=np.stack([f.transpose(2, 0, 1) for f in noshift]).astype(np.float32),
        masks=np.stack([m.transpose(2, 0, 1) for m in masks]).astype(np.float32),
        gt=read_pfm(Path(sample_dir) / "gt.pfm").transpose(2, 0, 1).astype(np.float32),
        e_base=e_base,
        gt_shifts=np.asarray(manifest["gt_shifts"], dtype=np.float32),
    )


def load_dataset(dataset_dir) -> list:
    dirs = sorted(p for p in Path(dataset_dir).iterdir() if p.is_dir() and (p / "manifest.json").exists())
    if not dirs:
        raise FileNotFoundError(f"no samples under {dataset_dir}")
    return [load_sample(d) for d in dirs]


def _translate_np(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Bilinear content translation by (+dx, +dy) with zero padding; (C, H, W)."""
    c, h, w = img.shape
    ys = np.arange(h, dtype=np.float64)[:, None] - dy
    xs = np.arange(w, dtype=np.float64)[None, :] - dx
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros_like(img)
    for oy, oxw in ((0, 1 - fy), (1, fy)):
        for ox, oww in ((0, 1 - fx), (1, fx)):
            yt = (y0 + oy).astype(np.int64)
            xt = (x0 + ox).astype(np.int64)
            inb = (yt >= 0) & (yt < h) & (xt >= 0) & (xt < w)
            wgt = (oxw * oww * inb).astype(np.float32)
            yc = np.clip(yt, 0, h - 1)
            xc = np.clip(xt, 0, w - 1)
            out += wgt[None] * img[:, yc, xc]
    return out


class BatchSampler:
    """Random crops from preloaded samples, with an optional translation curriculum."""

    def __init__(self, samples: list, crop: int, batch: int, seed: int, n_frames: int | None = None):
        self.samples = samples
        self.crop = crop
        self.batch = batch
        self.rng = np.random.default_rng(seed)
        self.n_frames = n_frames

    def draw(self, extra_translation: tuple[float, float] | None = None):
        """One batch; extra_translation=(lo, hi) adds curriculum motion per alternate frame.

        Returns tensors (frames, noshift, masks, gt, e_base, extra_shifts):
        frames/noshift are base-exposure-normalized, gt is unit-exposure, and
        e_base (B,) converts between the two; extra_shifts is (B, N, 2) of
        curriculum translations.
        """
        frames, noshift, masks, gts, bases, extras = [], [], [], [], [], []
        for _ in range(self.batch):
            s = self.samples[int(self.rng.integers(len(self.samples)))]
            n, _, h, w = s.frames.shape
            if self.n_frames is not None:
                n = min(n, self.n_frames)
            y0 = int(self.rng.integers(0, h - self.crop + 1))
            x0 = int(self.rng.integers(0, w - self.crop + 1))
            win = (slice(y0, y0 + self.crop), slice(x0, x0 + self.crop))
            f = s.frames[:n][:, :, win[0], win[1]].copy()
            extra = np.zeros((n, 2), dtype=np.float32)
            if extra_translation is not None:
                lo, hi = extra_translation
                for i in range(1, n):
                    mag = self.rng.uniform(lo, hi)
                    ang = self.rng.uniform(0, 2 * math.pi)
                    dx, dy = mag * math.cos(ang), mag * math.sin(ang)
                    f[i] = _translate_np(f[i], dx, dy)
                    extra[i] = (dx, dy)
            frames.append(f)
            noshift.append(s.noshift[:n][:, :, win[0], win[1]])
            masks.append(s.masks[:n][:, :, win[0], win[1]])
            gts.append(s.gt[:, win[0], win[1]])
            bases.append(s.e_base)
            extras.append(extra)
        to = lambda arrs: torch.from_numpy(np.stack(arrs))
        return (
            to(frames),
            to(noshift),
            to(masks),
            to(gts),
            torch.tensor(bases, dtype=torch.float32),
            to(extras),
        )


def synth_hdr_sources(out_dir, count: int = 8, size: int = 128, seed: int = 0) -> list:
    """Procedural linear HDR source PFMs with mixed smooth structure and texture."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    for i in range(count):
        img = np.zeros((size, size, 3), np.float32)
        for _ in range(int(rng.integers(3, 7))):
            fx, fy = rng.uniform(0.02, 0.25, 2)
            phase = rng.uniform(0, 2 * math.pi, 2)
            amp = rng.uniform(0.1, 0.5)
            wave = amp * np.sin(2 * math.pi * fx * xs + phase[0]) * np.cos(2 * math.pi * fy * ys + phase[1])
            img += wave[:, :, None] * rng.uniform(0.3, 1.0, 3).astype(np.float32)
        img += rng.random((size, size, 3), dtype=np.float32) * rng.uniform(0.05, 0.3)
        # a few bright highlight blobs so the exposure ladder has something to clip
        for _ in range(int(rng.integers(1, 4))):
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(3, 12)
            blob = np.exp(-(((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * r * r)))
            img += blob[:, :, None] * rng.uniform(1.0, 4.0)
        img = np.clip(img - img.min(), 0, None)
        path = out / f"source_{i:02d}.pfm"
        write_pfm(path, img.astype(np.float32))
        paths.append(str(path))
    return paths


def make_dataset(out_dir, count: int, seed: int, size: int = 128, n_frames: int = 3, extra_args=()) -> Path:
    """Generate a burst dataset by driving the runtime CLI (external interface)."""
    out = Path(out_dir)
    sources = synth_hdr_sources(out / "sources", count=8, size=size, seed=seed)
    cmd = [
        sys.executable,
        "-m",
        "luckyhdr",
        "simulate",
        "--out",
        str(out / "bursts"),
        "--count",
        str(count),
        "--seed",
        str(seed),
        "--n-frames",
        str(n_frames),
    ]
    for s in sources:
        cmd += ["--source", s]
    cmd += list(extra_args)
    subprocess.run(cmd, check=True, capture_output=True, text=True)
    return out / "bursts"
