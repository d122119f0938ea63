"""Conformance-vector export: fixed inputs plus trainer forward outputs.

The runtime's cross-component test loads these vectors, runs its own forward
over the same bundle, and compares outputs. Vector generation is
deterministic in the seed.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch

from .nets import TrainerStack

TOLERANCE = 1e-5


def export_conformance_vectors(bundle_path, out_dir, seed: int = 314, size: int = 16) -> Path:
    stack = TrainerStack()
    stack.import_bundle(bundle_path)
    stack.eval()
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    arrays = {}
    with torch.no_grad():
        for name, net, channels in (
            ("coarse", stack.coarse, 12),
            ("fine", stack.fine, 12),
            ("merge", stack.merge, 8),
        ):
            x = rng.standard_normal((channels, size, size)).astype(np.float32)
            y = net(torch.from_numpy(x).unsqueeze(0))[0].numpy()
            arrays[f"{name}_in"] = x
            arrays[f"{name}_out"] = y

    vec_path = out / "forward_vectors.npz"
    tmp = Path(str(vec_path) + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **arrays)
    os.replace(tmp, vec_path)

    manifest = {
        "bundle": str(Path(bundle_path).name),
        "tolerance": TOLERANCE,
        "seed": seed,
        "size": size,
        "vectors": vec_path.name,
    }
    man_path = out / "manifest.json"
    tmp = Path(str(man_path) + ".tmp")
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, man_path)
    return vec_path


def load_conformance_vectors(out_dir):
    out = Path(out_dir)
    with open(out / "manifest.json") as f:
        manifest = json.load(f)
    with np.load(out / manifest["vectors"]) as z:
        arrays = {k: z[k] for k in z.files}
    return manifest, arrays
