"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see per-criterion
results. Everything here uses the repo-shipped fixture weights or
deterministic random stacks; nothing depends on trained artifacts.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from luckyhdr.align import AlignConfig, predict_shift_parts
from luckyhdr.autoexpose import (
    DeviceLimits,
    ExposureSettings,
    plan_bracket,
    predicted_shadow_snr,
)
from luckyhdr.imaging import LinearImage, NoiseModel, bilinear_warp, exposure_normalize
from luckyhdr.merge import merge_feature, merge_weights
from luckyhdr.nets import NetStack, default_specs, random_stack, total_param_count
from luckyhdr.pipeline import audit_convexity, iterative_merge
from luckyhdr.simulate import SimConfig, expose_frame, simulate_burst
from luckyhdr.tinycnn import PARAM_BUDGET, conv2d, load_weights, save_weights

from test_pipeline import clip_aware_logits, gt_shift_injector
from test_simulate import make_hdr
from test_tinycnn import conv2d_oracle, _toy_spec_bundle

FIXTURE_WEIGHTS = Path(__file__).resolve().parent.parent / "weights" / "fixture.lhdrw"


def _report(name, detail):
    print(f"\n[PASS] {name}: {detail}")


def test_convexity_no_hallucination():
    """Every fused pixel replays as a convex combination, adversarial weights."""
    rng = np.random.default_rng(101)
    n_bursts = 100
    worst = 0.0
    for b in range(n_bursts):
        n_frames = int(rng.integers(3, 10))
        h = int(rng.integers(16, 28))
        w = int(rng.integers(16, 28))
        nets = random_stack(int(rng.integers(0, 2**31)), scale=float(rng.uniform(0.5, 3.0)))
        if b % 2 == 0:
            src = LinearImage(rng.random((h, w, 3), dtype=np.float32))
            cfg = SimConfig(
                n_frames=n_frames,
                seed=int(rng.integers(0, 2**31)),
                fg_enabled=bool(rng.random() < 0.5),
                blur_prob=0.3,
            )
            frames = simulate_burst(src, cfg, np.random.default_rng(cfg.seed)).frames
        else:
            frames = [
                LinearImage(rng.random((h, w, 3), dtype=np.float32), exposure_scale=float(2**i))
                for i in range(n_frames)
            ]
        trace = iterative_merge(frames, nets)
        hh, ww = trace.base.height, trace.base.width
        ok, err = audit_convexity(trace, n_pixels=min(1000, hh * ww), seed=b)
        worst = max(worst, err)
        assert ok, f"burst {b}: audit failed with max error {err:.3g}"
    _report("convexity/no-hallucination", f"{n_bursts} bursts (3-9 frames), max replay error {worst:.2e} <= 1e-5")


def test_shift_bound():
    """Predicted shifts never exceed d*m_c + m_f; coarse stage never exceeds d*m_c."""
    rng = np.random.default_rng(202)
    cfg = AlignConfig()
    assert cfg.max_shift == 58.0
    trials = 0
    max_total = 0.0
    max_coarse = 0.0
    n_stacks, inputs_per_stack = 2000, 5
    for s in range(n_stacks):
        nets = random_stack(int(rng.integers(0, 2**31)), scale=float(rng.uniform(0.5, 8.0)))
        for _ in range(inputs_per_stack):
            i_b = LinearImage(rng.random((12, 12, 3), dtype=np.float32))
            i_a = LinearImage(rng.random((12, 12, 3), dtype=np.float32))
            total, coarse, fine = predict_shift_parts(i_b, i_a, nets, cfg)
            max_total = max(max_total, float(np.abs(total).max()))
            max_coarse = max(max_coarse, float(np.abs(coarse).max()))
            assert np.abs(coarse).max() <= 52.0
            assert np.abs(fine).max() <= 6.0
            assert np.abs(total).max() <= 58.0
            trials += 1
    assert trials >= 10_000
    _report(
        "shift bound",
        f"{trials} random weight/input trials, max |total| {max_total:.2f} <= 58, max |coarse| {max_coarse:.2f} <= 52",
    )


def test_simulator_noise_fidelity():
    """Binned empirical variance tracks a*x + b within 2% over 1e6 samples per pair."""
    rng = np.random.default_rng(303)
    levels = np.linspace(0.05, 0.7, 8)
    n_per_level = 125_000
    worst = 0.0
    for pair in range(5):
        ns = float(np.exp(rng.uniform(math.log(1e-5), math.log(1e-3))))
        no = float(np.exp(rng.uniform(math.log(1e-7), math.log(1e-5))))
        data = np.repeat(levels, n_per_level).astype(np.float32).reshape(-1, 1000, 1)
        h = LinearImage(data)
        frame = expose_frame(h, 1.0, NoiseModel(ns, no), np.random.default_rng(1000 + pair), bit_depth=None)
        resid = frame.data.astype(np.float64) - data.astype(np.float64)
        for i, x in enumerate(levels):
            block = resid.reshape(len(levels), n_per_level)[i]
            var = block.var()
            expected = ns * float(x) + no
            rel = abs(var - expected) / expected
            worst = max(worst, rel)
            assert rel < 0.02, f"pair {pair} (ns={ns:.2e}, no={no:.2e}) at x={x:.2f}: rel err {rel:.3f}"
    _report("simulator noise fidelity", f"5 noise pairs x 8 intensity bins, worst relative error {worst:.3%} < 2%")


def test_warp_oracle_equivalence():
    """bilinear_warp equals brute-force translation on the interior for integer shifts."""
    rng = np.random.default_rng(404)
    img = LinearImage(rng.random((64, 64, 3), dtype=np.float32))
    checked = 0
    for dx in range(-5, 6):
        for dy in range(-5, 6):
            shift = np.empty((64, 64, 2), np.float32)
            shift[:, :, 0] = dx
            shift[:, :, 1] = dy
            out, validity = bilinear_warp(img, shift)
            # brute-force oracle: out(y, x) = img(y + dy, x + dx)
            ys = np.arange(64) + dy
            xs = np.arange(64) + dx
            yv = (ys >= 0) & (ys < 64)
            xv = (xs >= 0) & (xs < 64)
            interior = np.ix_(np.flatnonzero(yv), np.flatnonzero(xv))
            expected = img.data[np.ix_(ys[yv], xs[xv])]
            assert out.data[interior].tobytes() == expected.tobytes()
            assert np.all(validity[interior] == 1.0)
            outside = np.ones((64, 64), dtype=bool)
            outside[interior] = False
            assert np.all(out.data[outside] == 0.0)
            assert np.all(validity[outside] == 0.0)
            checked += 1
    assert checked == 121
    _report("warp oracle equivalence", "121 integer shifts in [-5,5]^2 on 64x64, interior exact")


def test_ae_contract():
    """Bracket plans: exact 4 EV span, legal factorization, 20 dB shadow floor."""
    rng = np.random.default_rng(505)
    limits = DeviceLimits()
    for trial in range(20):
        duration = float(rng.uniform(1 / 500, 1 / 30))
        reference = ExposureSettings(duration_s=duration, iso=100.0)
        noise = NoiseModel(
            float(np.exp(rng.uniform(math.log(1e-5), math.log(1e-3)))),
            float(np.exp(rng.uniform(math.log(1e-7), math.log(1e-5)))),
        )
        shadow = float(rng.uniform(0.001, 0.2))
        plan = plan_bracket(reference, noise, n=5, shadow_level=shadow, limits=limits)
        totals = [s.total_exposure for s in plan.settings]
        assert len(totals) == 5
        assert math.isclose(totals[-1] / totals[0], 16.0, rel_tol=1e-9), "span must be exactly 4 EV"
        for s, t in zip(plan.settings, totals):
            assert s.duration_s <= 1.0 + 1e-12
            if s.iso > s.base_iso:
                assert t > 1.0, "ISO above base requires an unclamped duration beyond 1 s"
        if not plan.warning:
            x_short = shadow * totals[0] / reference.total_exposure
            snr_db = 20 * math.log10(predicted_shadow_snr(min(x_short, 1.0), noise))
            assert snr_db >= 20.0 - 1e-6, f"trial {trial}: shortest-frame SNR {snr_db:.2f} dB"
    _report("AE contract", "20 random references: 4 EV span, <=1 s durations, ISO rule, 20 dB floor")


def test_tinycnn_conformance():
    """conv2d bitwise vs naive oracle; weight file round trips; parameter budget."""
    rng = np.random.default_rng(606)
    for case in range(50):
        ci = int(rng.integers(1, 6))
        co = int(rng.integers(1, 9))
        h = int(rng.integers(2, 10))
        w = int(rng.integers(2, 10))
        k = int(rng.choice([1, 3]))
        x = (rng.standard_normal((ci, h, w)) * rng.uniform(0.1, 10)).astype(np.float32)
        kernel = rng.standard_normal((k, k, ci, co)).astype(np.float32)
        bias = rng.standard_normal(co).astype(np.float32)
        assert conv2d(x, kernel, bias).tobytes() == conv2d_oracle(x, kernel, bias).tobytes(), f"case {case}"

    import tempfile

    with tempfile.TemporaryDirectory() as td:
        for seed in range(5):
            _, bundle = _toy_spec_bundle(np.random.default_rng(seed))
            path = Path(td) / f"bundle_{seed}.lhdrw"
            save_weights(bundle, path)
            back = load_weights(path)
            for a, b in zip(bundle.layers, back.layers):
                assert a.kernel.tobytes() == b.kernel.tobytes()
                assert a.bias.tobytes() == b.bias.tobytes()

    total = total_param_count(default_specs())
    assert total <= PARAM_BUDGET
    _report(
        "tiny-CNN conformance",
        f"50 conv cases bitwise-equal, 5 bundles round-trip bit-exact, {total} params <= {PARAM_BUDGET}",
    )


def test_performance_smoke():
    """One align+merge iteration at 512x512 within 200 ms, single-threaded."""
    import gc

    rng = np.random.default_rng(707)
    nets = NetStack.load(FIXTURE_WEIGHTS)
    small = [
        LinearImage(rng.random((64, 64, 3), dtype=np.float32), exposure_scale=1.0),
        LinearImage(rng.random((64, 64, 3), dtype=np.float32), exposure_scale=2.0),
    ]
    iterative_merge(small, nets)  # JIT warmup

    frames = [
        LinearImage(rng.random((512, 512, 3), dtype=np.float32), exposure_scale=1.0),
        LinearImage(rng.random((512, 512, 3), dtype=np.float32), exposure_scale=2.0),
    ]
    gc.collect()
    best = math.inf
    for _ in range(5):
        t0 = time.perf_counter()
        iterative_merge(frames, nets)
        best = min(best, time.perf_counter() - t0)
    ms = best * 1e3
    assert ms <= 200.0, f"one 512x512 iteration took {ms:.1f} ms"
    _report("performance smoke", f"one align+merge iteration at 512x512: {ms:.1f} ms <= 200 ms (single core)")


def test_ground_truth_injection_end_to_end():
    """Noiseless bursts with injected shifts and clip-aware weights hit 60 dB."""
    rng = np.random.default_rng(808)
    worst = math.inf
    for trial in range(3):
        src = make_hdr(rng, 96, 96)
        cfg = SimConfig(
            n_frames=3,
            exposure_step_ev=2.0,
            ns_range=(0.0, 0.0),
            no_range=(0.0, 0.0),
            blur_prob=0.0,
            fg_enabled=False,
            integer_shifts=True,
            shift_mixture=(0.0, 2.0, 16.0),
            powerlaw_range=(1.0, 1.3),
            seed=900 + trial,
        )
        sample = simulate_burst(src, cfg)
        trace = iterative_merge(
            sample.frames,
            NetStack.load(FIXTURE_WEIGHTS),
            shift_override=gt_shift_injector(sample),
            weight_fn=clip_aware_logits,
        )
        h_full = exposure_normalize(trace.estimate, 1.0)
        gt = sample.gt_hdr
        unclipped_any = np.zeros((96, 96), dtype=bool)
        for e in sample.exposures:
            unclipped_any |= (e * gt.data.astype(np.float64) < 1.0).all(axis=2)
        mse = ((h_full.data.astype(np.float64) - gt.data.astype(np.float64)) ** 2)[unclipped_any].mean()
        psnr_l = 10 * math.log10(1.0 / mse)
        worst = min(worst, psnr_l)
        assert psnr_l >= 60.0, f"trial {trial}: PSNR_l {psnr_l:.1f} dB"
    _report("ground-truth injection", f"3 noiseless bursts, PSNR_l on unclipped pixels >= {worst:.1f} dB (floor 60)")


def test_fixture_weights_shipped():
    """The repo-shipped fixture bundle loads and budget-checks."""
    assert FIXTURE_WEIGHTS.exists(), "weights/fixture.lhdrw must ship with the repo"
    nets = NetStack.load(FIXTURE_WEIGHTS)
    rng = np.random.default_rng(909)
    psi = merge_feature(LinearImage(rng.random((8, 8, 3), dtype=np.float32)))
    w = merge_weights(psi, psi, np.ones((8, 8), np.float32), nets)
    np.testing.assert_allclose(w.w_b + w.w_a, 1.0, atol=1e-6)
    _report("fixture weights", f"{nets.to_bundle().param_count} params load from {FIXTURE_WEIGHTS.name}")
