"""On-disk burst dataset layout.

One directory per sample:

    sample_0000/
        frames_0.pfm  frames_0.txt   (+ one pair per frame, short to long)
        noshift_0.pfm ...
        mask_0.pfm    ...
        gt.pfm
        manifest.json

The dataset root carries its own manifest.json echoing the resolved
simulation config, the seed and the source list. Sample seeds are spawned
from the root seed with numpy's SeedSequence, so generation is deterministic
and samples are independent streams.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .imaging import LinearImage, NoiseModel
from .pfm import load_frame, read_pfm, save_frame, write_pfm
from .simulate import BurstSample, SimConfig, simulate_burst


def _write_json(path, obj) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def config_to_dict(cfg: SimConfig) -> dict:
    return dataclasses.asdict(cfg)


def write_burst_sample(sample: BurstSample, out_dir, sample_id: str, cfg: SimConfig, seed) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(sample.frames):
        save_frame(frame, out / f"frames_{i}.pfm", iso=100.0, duration_s=frame.exposure_scale)
        write_pfm(out / f"noshift_{i}.pfm", sample.noshift_targets[i].data)
        write_pfm(out / f"mask_{i}.pfm", sample.validity_masks[i])
    write_pfm(out / "gt.pfm", sample.gt_hdr.data)
    manifest = {
        "sample_id": sample_id,
        "seed": seed,
        "n_frames": len(sample.frames),
        "base_index": sample.base_index,
        "step_ev": sample.step_ev,
        "exposures": sample.exposures,
        "gt_shifts": [list(s) for s in sample.gt_shifts],
        "blurred": sample.blurred,
        "unmatchable": sample.unmatchable,
        "noise": {"ns": sample.noise.a, "no": sample.noise.b},
        "config": config_to_dict(cfg),
    }
    _write_json(out / "manifest.json", manifest)


class LoadedSample:
    """A sample read back from disk; mirrors BurstSample plus its manifest."""

    def __init__(self, path):
        self.path = Path(path)
        manifest_path = self.path / "manifest.json"
        if not manifest_path.exists():
            raise FormatError(f"{self.path}: missing manifest.json")
        with open(manifest_path) as f:
            self.manifest = json.load(f)
        n = int(self.manifest["n_frames"])
        self.frames = [load_frame(self.path / f"frames_{i}.pfm") for i in range(n)]
        exposures = self.manifest["exposures"]
        self.noshift_targets = [
            LinearImage(read_pfm(self.path / f"noshift_{i}.pfm"), exposure_scale=exposures[i]) for i in range(n)
        ]
        self.validity_masks = [read_pfm(self.path / f"mask_{i}.pfm")[:, :, 0] for i in range(n)]
        self.gt_hdr = LinearImage(read_pfm(self.path / "gt.pfm"), exposure_scale=1.0)
        self.gt_shifts = [tuple(s) for s in self.manifest["gt_shifts"]]
        self.base_index = int(self.manifest["base_index"])
        noise = self.manifest.get("noise", {})
        self.noise = NoiseModel(float(noise.get("ns", 0.0)), float(noise.get("no", 0.0)))

    @property
    def sample_id(self) -> str:
        return str(self.manifest.get("sample_id", self.path.name))


def sample_dirs(dataset_dir) -> list:
    root = Path(dataset_dir)
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "manifest.json").exists())


def generate_dataset(sources: list, out_dir, count: int, cfg: SimConfig, seed: int | None = None) -> list:
    """Simulate ``count`` bursts into ``out_dir``, cycling through the source images.

    ``sources`` is a list of (name, LinearImage) pairs. Returns the sample
    directories written.
    """
    root_seed = cfg.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(root_seed).spawn(count)
    dirs = []
    for s in range(count):
        name, source = sources[s % len(sources)]
        rng = np.random.default_rng(children[s])
        sample = simulate_burst(source, cfg, rng)
        sample_id = f"sample_{s:04d}"
        sdir = out / sample_id
        write_burst_sample(sample, sdir, sample_id, cfg, seed=[root_seed, s])
        dirs.append(sdir)
    _write_json(
        out / "manifest.json",
        {
            "count": count,
            "seed": root_seed,
            "sources": [name for name, _ in sources],
            "config": config_to_dict(cfg),
        },
    )
    return dirs
