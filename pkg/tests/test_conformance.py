"""Cross-component conformance: trainer-exported vectors vs the runtime forward.

The trainer ships fixed random inputs and its own forward outputs for each
network alongside the trained bundle; the runtime must reproduce them within
the recorded tolerance.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from luckyhdr.nets import COARSE_SPEC, FINE_SPEC, MERGE_SPEC, NetStack
from luckyhdr.tinycnn import forward

REPO = Path(__file__).resolve().parent.parent
CONFORMANCE = REPO / "conformance"


@pytest.fixture(scope="module")
def vectors():
    manifest_path = CONFORMANCE / "manifest.json"
    if not manifest_path.exists():
        pytest.fail("conformance vectors missing; run `python -m lhdr_trainer export-vectors`")
    manifest = json.loads(manifest_path.read_text())
    arrays = dict(np.load(CONFORMANCE / manifest["vectors"]))
    nets = NetStack.load(REPO / "weights" / manifest["bundle"])
    return manifest, arrays, nets


def test_forward_matches_trainer(vectors):
    manifest, arrays, nets = vectors
    tol = float(manifest["tolerance"])
    worst = 0.0
    for name, spec, bundle in (
        ("coarse", COARSE_SPEC, nets.coarse),
        ("fine", FINE_SPEC, nets.fine),
        ("merge", MERGE_SPEC, nets.merge),
    ):
        out = forward(spec, bundle, arrays[f"{name}_in"])
        diff = float(np.abs(out - arrays[f"{name}_out"]).max())
        worst = max(worst, diff)
        assert diff <= tol, f"{name}: max abs diff {diff:.2e} > {tol:.0e}"
    print(f"\n[PASS] cross-component conformance: worst forward diff {worst:.2e} <= {tol:.0e}")


def test_trained_bundle_loads_and_is_in_budget():
    manifest = json.loads((CONFORMANCE / "manifest.json").read_text())
    nets = NetStack.load(REPO / "weights" / manifest["bundle"])
    assert nets.to_bundle().param_count <= 70_000
