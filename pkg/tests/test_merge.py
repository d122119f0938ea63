import numpy as np
import pytest

from luckyhdr.errors import ParameterError
from luckyhdr.imaging import LinearImage
from luckyhdr.merge import MergeWeights, fuse, gate_and_normalize, merge_feature, merge_weights
from luckyhdr.nets import random_stack, zero_stack

from conftest import make_image


class TestMergeFeature:
    def test_black_image_zero_feature(self):
        img = LinearImage(np.zeros((6, 6, 3), np.float32))
        psi = merge_feature(img)
        np.testing.assert_array_equal(psi, np.zeros((4, 6, 6), np.float32))

    def test_rgb_channels_bitwise(self, rng):
        img = make_image(rng, 7, 5)
        psi = merge_feature(img)
        assert psi[0].tobytes() == np.ascontiguousarray(img.data[:, :, 0]).tobytes()
        assert psi[1].tobytes() == np.ascontiguousarray(img.data[:, :, 1]).tobytes()
        assert psi[2].tobytes() == np.ascontiguousarray(img.data[:, :, 2]).tobytes()

    def test_gray_gamma_luma(self):
        img = LinearImage(np.full((4, 4, 3), 0.5, np.float32))
        psi = merge_feature(img, gamma=2.2)
        np.testing.assert_allclose(psi[3], 0.5 ** (1 / 2.2), atol=1e-6)

    def test_rejects_single_channel(self):
        with pytest.raises(ParameterError):
            merge_feature(LinearImage(np.zeros((4, 4, 1), np.float32)))


class TestMergeWeights:
    def test_zero_net_equal_weights(self, rng):
        nets = zero_stack()
        psi_b = merge_feature(make_image(rng, 8, 8))
        psi_a = merge_feature(make_image(rng, 8, 8))
        w = merge_weights(psi_b, psi_a, np.ones((8, 8), np.float32), nets)
        np.testing.assert_allclose(w.w_b, 0.5, atol=1e-6)
        np.testing.assert_allclose(w.w_a, 0.5, atol=1e-6)

    def test_zero_validity_forces_base(self, rng):
        nets = random_stack(5)
        psi_b = merge_feature(make_image(rng, 8, 8))
        psi_a = merge_feature(make_image(rng, 8, 8))
        validity = np.zeros((8, 8), np.float32)
        w = merge_weights(psi_b, psi_a, validity, nets)
        np.testing.assert_array_equal(w.w_a, np.zeros((8, 8), np.float32))
        np.testing.assert_array_equal(w.w_b, np.ones((8, 8), np.float32))

    def test_fractional_validity_scalar_arithmetic(self):
        # softmax(2, -1) = (0.952574..., 0.047426...); gate by 0.5, renormalize
        p_b, p_a = 0.9525741268224332, 0.04742587317756678
        w = gate_and_normalize(
            np.full((1, 1), p_b, np.float32), np.full((1, 1), p_a, np.float32), np.full((1, 1), 0.5, np.float32)
        )
        expected_a = (0.5 * p_a) / (p_b + 0.5 * p_a)
        np.testing.assert_allclose(w.w_a[0, 0], expected_a, atol=1e-6)
        np.testing.assert_allclose(w.w_b[0, 0] + w.w_a[0, 0], 1.0, atol=1e-6)

    def test_weight_algebra_random(self, rng):
        nets = random_stack(6)
        for _ in range(5):
            psi_b = merge_feature(make_image(rng, 9, 9))
            psi_a = merge_feature(make_image(rng, 9, 9))
            validity = rng.random((9, 9), dtype=np.float32)
            validity[rng.random((9, 9)) < 0.3] = 0.0
            w = merge_weights(psi_b, psi_a, validity, nets)
            assert np.all(w.w_a >= 0) and np.all(w.w_b >= 0)
            np.testing.assert_allclose(w.w_b + w.w_a, 1.0, atol=1e-6)
            assert np.all(w.w_a[validity == 0.0] == 0.0)


class TestFuse:
    def test_full_base_weight(self, rng):
        i_b = make_image(rng, 6, 6)
        i_a = make_image(rng, 6, 6)
        w = MergeWeights(np.ones((6, 6), np.float32), np.zeros((6, 6), np.float32))
        out = fuse(i_b, i_a, w)
        np.testing.assert_array_equal(out.data, i_b.data)

    def test_midpoint(self):
        i_b = LinearImage(np.full((2, 2, 3), 0.2, np.float32))
        i_a = LinearImage(np.full((2, 2, 3), 0.6, np.float32))
        w = MergeWeights(np.full((2, 2), 0.5, np.float32), np.full((2, 2), 0.5, np.float32))
        np.testing.assert_allclose(fuse(i_b, i_a, w).data, 0.4, atol=1e-7)

    def test_matches_scalar_oracle(self, rng):
        i_b = make_image(rng, 5, 4)
        i_a = make_image(rng, 5, 4)
        wa = rng.random((5, 4), dtype=np.float32)
        w = MergeWeights((1.0 - wa).astype(np.float32), wa)
        out = fuse(i_b, i_a, w)
        for y in range(5):
            for x in range(4):
                for c in range(3):
                    expected = float(i_b.data[y, x, c]) + float(wa[y, x]) * (
                        float(i_a.data[y, x, c]) - float(i_b.data[y, x, c])
                    )
                    assert abs(float(out.data[y, x, c]) - expected) < 1e-6

    def test_idempotent_on_identical_inputs(self, rng):
        img = make_image(rng, 7, 7)
        wa = rng.random((7, 7), dtype=np.float32)
        w = MergeWeights((1.0 - wa).astype(np.float32), wa)
        out = fuse(img, img, w)
        np.testing.assert_array_equal(out.data, img.data)

    def test_output_within_hull(self, rng):
        for _ in range(10):
            i_b = make_image(rng, 6, 6)
            i_a = make_image(rng, 6, 6)
            wa = rng.random((6, 6), dtype=np.float32)
            out = fuse(i_b, i_a, MergeWeights((1.0 - wa).astype(np.float32), wa))
            lo = np.minimum(i_b.data, i_a.data)
            hi = np.maximum(i_b.data, i_a.data)
            assert np.all(out.data >= lo) and np.all(out.data <= hi)
