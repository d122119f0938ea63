import json

import numpy as np

from luckyhdr.dataset import LoadedSample, generate_dataset, sample_dirs
from luckyhdr.simulate import SimConfig

from test_simulate import make_hdr


def _sources(rng, n=2):
    return [(f"src_{i}", make_hdr(rng, 40, 40)) for i in range(n)]


def test_layout_and_roundtrip(tmp_path, rng):
    cfg = SimConfig(n_frames=3, seed=7)
    dirs = generate_dataset(_sources(rng), tmp_path / "ds", count=2, cfg=cfg)
    assert len(dirs) == 2
    for d in dirs:
        for i in range(3):
            assert (d / f"frames_{i}.pfm").exists()
            assert (d / f"frames_{i}.txt").exists()
            assert (d / f"noshift_{i}.pfm").exists()
            assert (d / f"mask_{i}.pfm").exists()
        assert (d / "gt.pfm").exists()
        assert (d / "manifest.json").exists()

    sample = LoadedSample(dirs[0])
    assert len(sample.frames) == 3
    es = [f.exposure_scale for f in sample.frames]
    assert all(b > a for a, b in zip(es, es[1:]))
    assert sample.gt_hdr.channels == 3
    assert sample.validity_masks[0].shape == (40, 40)


def test_manifest_echoes_config(tmp_path, rng):
    cfg = SimConfig(n_frames=3, seed=1)
    dirs = generate_dataset(_sources(rng, 1), tmp_path / "ds", count=1, cfg=cfg)
    manifest = json.loads((dirs[0] / "manifest.json").read_text())
    assert manifest["config"]["ns_range"] == [1e-5, 1e-3]
    assert manifest["config"]["no_range"] == [1e-7, 1e-5]
    assert manifest["n_frames"] == 3
    root_manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert root_manifest["count"] == 1
    assert root_manifest["config"]["shift_mixture"] == [0.05, 2.0, 16.0]


def test_byte_identical_regeneration(tmp_path, rng):
    cfg = SimConfig(n_frames=3, seed=99)
    sources = _sources(rng)
    a = generate_dataset(sources, tmp_path / "a", count=3, cfg=cfg)
    b = generate_dataset(sources, tmp_path / "b", count=3, cfg=cfg)
    for da, db in zip(a, b):
        for name in sorted(p.name for p in da.iterdir()):
            ba = (da / name).read_bytes()
            bb = (db / name).read_bytes()
            assert ba == bb, name


def test_sample_dirs_sorted(tmp_path, rng):
    cfg = SimConfig(n_frames=3, seed=3)
    generate_dataset(_sources(rng, 1), tmp_path / "ds", count=3, cfg=cfg)
    dirs = sample_dirs(tmp_path / "ds")
    assert [d.name for d in dirs] == ["sample_0000", "sample_0001", "sample_0002"]


def test_distinct_seeds_differ(tmp_path, rng):
    sources = _sources(rng, 1)
    a = generate_dataset(sources, tmp_path / "a", count=1, cfg=SimConfig(n_frames=3, seed=1))
    b = generate_dataset(sources, tmp_path / "b", count=1, cfg=SimConfig(n_frames=3, seed=2))
    assert (a[0] / "frames_0.pfm").read_bytes() != (b[0] / "frames_0.pfm").read_bytes()
