import numpy as np
import pytest

from luckyhdr.errors import FormatError, ParameterError, WeightIncompatibilityError
from luckyhdr.nets import NetStack, default_specs, random_stack, total_param_count, zero_stack
from luckyhdr.tinycnn import (
    PARAM_BUDGET,
    ConvLayerSpec,
    LayerWeights,
    NetworkSpec,
    WeightBundle,
    avg_downsample,
    bilinear_upsample,
    conv2d,
    forward,
    load_weights,
    save_weights,
    softmax_channels,
)


def conv2d_oracle(x, kernel, bias):
    """Naive quadruple loop with stepwise float32 accumulation in (ky, kx, ci) order."""
    ci_n, h, w = x.shape
    kk = kernel.shape[0]
    co_n = kernel.shape[3]
    r = kk // 2
    out = np.empty((co_n, h, w), dtype=np.float32)
    for o in range(co_n):
        for y in range(h):
            for xx in range(w):
                acc = np.float32(bias[o])
                for ky in range(kk):
                    yy = min(max(y + ky - r, 0), h - 1)
                    for kx in range(kk):
                        xs = min(max(xx + kx - r, 0), w - 1)
                        for ci in range(ci_n):
                            acc = np.float32(acc + np.float32(x[ci, yy, xs] * kernel[ky, kx, ci, o]))
                out[o, y, xx] = acc
    return out


class TestConv2d:
    def test_identity_1x1(self, rng):
        x = rng.random((3, 5, 6), dtype=np.float32)
        kernel = np.zeros((1, 1, 3, 3), np.float32)
        for c in range(3):
            kernel[0, 0, c, c] = 1.0
        out = conv2d(x, kernel, np.zeros(3, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_zero_kernel_gives_bias(self, rng):
        x = rng.random((2, 4, 4), dtype=np.float32)
        out = conv2d(x, np.zeros((3, 3, 2, 2), np.float32), np.array([0.5, -1.0], np.float32))
        np.testing.assert_array_equal(out[0], np.full((4, 4), 0.5, np.float32))
        np.testing.assert_array_equal(out[1], np.full((4, 4), -1.0, np.float32))

    def test_bitwise_matches_oracle(self, rng):
        for _ in range(10):
            ci = int(rng.integers(1, 5))
            co = int(rng.integers(1, 7))
            h = int(rng.integers(3, 9))
            w = int(rng.integers(3, 9))
            x = rng.standard_normal((ci, h, w)).astype(np.float32)
            kernel = rng.standard_normal((3, 3, ci, co)).astype(np.float32)
            bias = rng.standard_normal(co).astype(np.float32)
            out = conv2d(x, kernel, bias)
            ref = conv2d_oracle(x, kernel, bias)
            assert out.tobytes() == ref.tobytes()

    def test_rejects_even_kernel(self, rng):
        with pytest.raises(ParameterError):
            conv2d(rng.random((1, 4, 4), dtype=np.float32), np.zeros((2, 2, 1, 1), np.float32), np.zeros(1, np.float32))

    def test_rejects_channel_mismatch(self, rng):
        with pytest.raises(ParameterError):
            conv2d(rng.random((2, 4, 4), dtype=np.float32), np.zeros((3, 3, 3, 1), np.float32), np.zeros(1, np.float32))


class TestSoftmax:
    def test_equal_logits(self):
        t = np.zeros((2, 3, 3), np.float32)
        out = softmax_channels(t)
        np.testing.assert_allclose(out, 0.5, atol=1e-7)

    def test_shift_invariance(self, rng):
        t = rng.standard_normal((2, 4, 4)).astype(np.float32)
        np.testing.assert_allclose(softmax_channels(t), softmax_channels(t + 3.0), atol=1e-6)

    def test_known_logits(self):
        t = np.zeros((2, 1, 1), np.float32)
        t[0], t[1] = 2.0, -1.0
        out = softmax_channels(t)
        np.testing.assert_allclose(out[0, 0, 0], 0.9525741268224332, atol=1e-6)
        np.testing.assert_allclose(out[1, 0, 0], 0.0474258731775668, atol=1e-6)

    def test_sums_to_one(self, rng):
        t = (rng.standard_normal((5, 6, 7)) * 20).astype(np.float32)
        out = softmax_channels(t)
        assert out.min() > 0
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-6)


class TestResampling:
    def test_factor_one_identity(self, rng):
        t = rng.random((3, 4, 4), dtype=np.float32)
        np.testing.assert_array_equal(avg_downsample(t, 1), t)
        np.testing.assert_array_equal(bilinear_upsample(t, 1), t)

    def test_constant_fixed_point(self):
        t = np.full((2, 8, 8), 0.7, np.float32)
        down = avg_downsample(t, 4)
        np.testing.assert_allclose(down, 0.7, atol=1e-7)
        up = bilinear_upsample(down, 4)
        np.testing.assert_allclose(up, 0.7, atol=1e-7)

    def test_ramp_box_averages(self):
        # 4x4 ramp, d=2: each 2x2 block averages by hand
        t = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
        down = avg_downsample(t, 2)
        np.testing.assert_allclose(down[0], [[2.5, 4.5], [10.5, 12.5]], atol=1e-7)

    def test_ragged_dims_pad_by_replication(self):
        t = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        down = avg_downsample(t, 2)
        assert down.shape == (1, 1, 2)
        # second block is columns [2, 2(replicated)] over both rows
        np.testing.assert_allclose(down[0, 0, 1], (2 + 2 + 5 + 5) / 4, atol=1e-7)

    def test_upsample_bounded_by_source(self, rng):
        t = rng.random((2, 3, 5), dtype=np.float32)
        up = bilinear_upsample(t, 4)
        assert up.shape == (2, 12, 20)
        assert up.min() >= t.min() - 1e-7
        assert up.max() <= t.max() + 1e-7


def _toy_spec_bundle(rng, layers=((3, 2, 4, "relu"), (3, 4, 2, "none"))):
    spec = NetworkSpec("toy", tuple(ConvLayerSpec(*l) for l in layers))
    ws = []
    for l in spec.layers:
        ws.append(
            LayerWeights(
                rng.standard_normal((l.kernel_size, l.kernel_size, l.in_channels, l.out_channels)).astype(np.float32),
                rng.standard_normal(l.out_channels).astype(np.float32),
                l.activation,
            )
        )
    return spec, WeightBundle(ws)


class TestForward:
    def test_single_identity_layer(self, rng):
        spec = NetworkSpec("id", (ConvLayerSpec(1, 2, 2, "none"),))
        kernel = np.zeros((1, 1, 2, 2), np.float32)
        kernel[0, 0, 0, 0] = kernel[0, 0, 1, 1] = 1.0
        bundle = WeightBundle([LayerWeights(kernel, np.zeros(2, np.float32), "none")])
        x = rng.random((2, 5, 5), dtype=np.float32)
        np.testing.assert_array_equal(forward(spec, bundle, x), x)

    def test_zero_weights_relu_is_zero(self, rng):
        spec = NetworkSpec("z", (ConvLayerSpec(3, 2, 3, "relu"),))
        bundle = WeightBundle([LayerWeights(np.zeros((3, 3, 2, 3), np.float32), np.zeros(3, np.float32), "relu")])
        out = forward(spec, bundle, rng.random((2, 4, 4), dtype=np.float32))
        np.testing.assert_array_equal(out, np.zeros((3, 4, 4), np.float32))

    def test_matches_layerwise_composition(self, rng):
        spec, bundle = _toy_spec_bundle(rng)
        x = rng.standard_normal((2, 5, 5)).astype(np.float32)
        out = forward(spec, bundle, x)
        ref = x
        for lw in bundle.layers:
            ref = conv2d_oracle(ref, lw.kernel, lw.bias)
            if lw.activation == "relu":
                ref = np.maximum(ref, 0)
        assert out.tobytes() == ref.tobytes()

    def test_hash_mismatch_rejected(self, rng):
        spec, bundle = _toy_spec_bundle(rng)
        other_spec = NetworkSpec("toy2", (ConvLayerSpec(3, 2, 4, "relu"), ConvLayerSpec(3, 4, 2, "tanh")))
        with pytest.raises(WeightIncompatibilityError):
            forward(other_spec, bundle, rng.random((2, 4, 4), dtype=np.float32))


class TestWeightsIO:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        _, bundle = _toy_spec_bundle(rng)
        path = tmp_path / "w.lhdrw"
        save_weights(bundle, path)
        back = load_weights(path)
        assert len(back.layers) == len(bundle.layers)
        for a, b in zip(bundle.layers, back.layers):
            assert a.kernel.tobytes() == b.kernel.tobytes()
            assert a.bias.tobytes() == b.bias.tobytes()
            assert a.activation == b.activation

    def test_truncated_rejected(self, tmp_path, rng):
        _, bundle = _toy_spec_bundle(rng)
        path = tmp_path / "w.lhdrw"
        save_weights(bundle, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            load_weights(path)

    def test_corrupted_hash_rejected(self, tmp_path, rng):
        _, bundle = _toy_spec_bundle(rng)
        path = tmp_path / "w.lhdrw"
        save_weights(bundle, path)
        blob = bytearray(path.read_bytes())
        blob[-1] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_weights(path)

    def test_flipped_payload_byte_rejected(self, tmp_path, rng):
        _, bundle = _toy_spec_bundle(rng)
        path = tmp_path / "w.lhdrw"
        save_weights(bundle, path)
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_weights(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "w.lhdrw"
        path.write_bytes(b"NOTAWGT1" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_weights(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "w.lhdrw"
        path.write_bytes(b"")
        with pytest.raises(FormatError):
            load_weights(path)


class TestStack:
    def test_default_budget(self):
        assert total_param_count() <= PARAM_BUDGET

    def test_stack_roundtrip(self, tmp_path):
        stack = random_stack(7)
        path = tmp_path / "stack.lhdrw"
        stack.save(path)
        back = NetStack.load(path)
        for a, b in zip(stack.to_bundle().layers, back.to_bundle().layers):
            assert a.kernel.tobytes() == b.kernel.tobytes()

    def test_zero_stack_specs(self):
        stack = zero_stack()
        coarse, fine, merge = default_specs()
        assert stack.coarse.architecture_hash == coarse.architecture_hash
        assert stack.fine.architecture_hash == fine.architecture_hash
        assert stack.merge.architecture_hash == merge.architecture_hash

    def test_wrong_layer_count_rejected(self, rng):
        _, bundle = _toy_spec_bundle(rng)
        with pytest.raises(WeightIncompatibilityError):
            NetStack.from_bundle(bundle)
