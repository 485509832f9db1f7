import numpy as np
import pytest
from scipy import stats

from stylediff.numerics import (
    DimensionError,
    RngStream,
    avg_pool2,
    avg_pool2_adjoint,
    diff_channels,
    diff_channels_adjoint,
    ensure_finite,
    gaussian_noise,
    NumericGuardError,
)


class TestRngStream:
    def test_same_key_same_values(self):
        a = gaussian_noise((4, 4, 3), RngStream(123, 7))
        b = gaussian_noise((4, 4, 3), RngStream(123, 7))
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = gaussian_noise((8, 8, 3), RngStream(123, 1))
        b = gaussian_noise((8, 8, 3), RngStream(123, 2))
        assert not np.allclose(a, b)

    def test_generator_restarts_at_zero(self):
        s = RngStream(5, 9)
        g1 = s.generator().standard_normal(10)
        g2 = s.generator().standard_normal(10)
        np.testing.assert_array_equal(g1, g2)

    def test_child_streams_independent_of_order(self):
        s = RngStream(42)
        a_then_b = (s.child(1).generator().standard_normal(), s.child(2).generator().standard_normal())
        b_then_a = (s.child(2).generator().standard_normal(), s.child(1).generator().standard_normal())
        assert a_then_b[0] == b_then_a[1]
        assert a_then_b[1] == b_then_a[0]

    def test_child_path_components_distinguish(self):
        s = RngStream(0)
        assert s.child(1, 2) != s.child(2, 1)


class TestGaussianNoise:
    def test_monte_carlo_moments(self):
        x = gaussian_noise((1000, 1000, 1), RngStream(2024))
        assert abs(x.mean()) < 0.005
        assert abs(x.var() - 1.0) < 0.01

    def test_bad_shape_raises(self):
        with pytest.raises(DimensionError):
            gaussian_noise((0, 4, 3), RngStream(0))
        with pytest.raises(DimensionError):
            gaussian_noise((), RngStream(0))

    def test_chi_square_goodness_of_fit(self):
        x = gaussian_noise((100_000,), RngStream(7))
        edges = stats.norm.ppf(np.linspace(0.0, 1.0, 21))
        counts, _ = np.histogram(x, bins=edges)
        chi2 = ((counts - 5000.0) ** 2 / 5000.0).sum()
        p = stats.chi2.sf(chi2, df=19)
        assert p > 0.001


class TestAvgPool2:
    def test_single_block(self):
        img = np.array([[0.0, 0.0], [1.0, 1.0]])[..., None]
        np.testing.assert_allclose(avg_pool2(img), [[[0.5]]])

    def test_constant_halves(self):
        img = np.full((8, 6, 3), 0.3)
        out = avg_pool2(img)
        assert out.shape == (4, 3, 3)
        np.testing.assert_allclose(out, 0.3)

    def test_ramp_hand_values(self):
        img = np.arange(16.0).reshape(4, 4, 1)
        out = avg_pool2(img)[..., 0]
        np.testing.assert_allclose(out, [[2.5, 4.5], [10.5, 12.5]])

    def test_odd_trailing_dropped(self):
        img = np.arange(5 * 5.0).reshape(5, 5, 1)
        assert avg_pool2(img).shape == (2, 2, 1)

    def test_too_small_raises(self):
        with pytest.raises(DimensionError):
            avg_pool2(np.zeros((1, 4, 3)))

    def test_preserves_global_mean_even_dims(self):
        img = RngStream(3).generator().standard_normal((8, 8, 3))
        np.testing.assert_allclose(avg_pool2(img).mean(), img.mean(), rtol=1e-12)

    def test_adjoint_dot_product(self):
        gen = RngStream(11).generator()
        x = gen.standard_normal((6, 8, 2))
        y = gen.standard_normal((3, 4, 2))
        lhs = float((avg_pool2(x) * y).sum())
        rhs = float((x * avg_pool2_adjoint(y, 6, 8)).sum())
        assert abs(lhs - rhs) < 1e-12


class TestDiffChannels:
    def test_constant_image(self):
        img = np.full((4, 4, 2), 0.7)
        out = diff_channels(img)
        assert out.shape == (4, 4, 6)
        np.testing.assert_allclose(out[..., :2], 0.7)
        np.testing.assert_allclose(out[..., 2:], 0.0)

    def test_horizontal_edge_has_zero_vertical_diffs(self):
        img = np.zeros((4, 4, 1))
        img[:, 2:, 0] = 1.0  # values change along x only
        out = diff_channels(img)
        np.testing.assert_allclose(out[..., 2], 0.0)

    def test_hand_values_2x2(self):
        img = np.array([[0.0, 1.0], [0.0, 1.0]])[..., None]
        out = diff_channels(img)
        np.testing.assert_allclose(out[..., 1], [[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(out[..., 2], 0.0)

    def test_identity_sum_preserved(self):
        img = RngStream(4).generator().standard_normal((5, 7, 3))
        out = diff_channels(img)
        np.testing.assert_allclose(out[..., :3].sum(), img.sum(), rtol=1e-12)

    def test_too_small_raises(self):
        with pytest.raises(DimensionError):
            diff_channels(np.zeros((4, 1, 3)))

    def test_adjoint_dot_product(self):
        gen = RngStream(12).generator()
        x = gen.standard_normal((5, 6, 3))
        y = gen.standard_normal((5, 6, 9))
        lhs = float((diff_channels(x) * y).sum())
        rhs = float((x * diff_channels_adjoint(y)).sum())
        assert abs(lhs - rhs) < 1e-12

    def test_adjoint_channel_check(self):
        with pytest.raises(DimensionError):
            diff_channels_adjoint(np.zeros((4, 4, 4)))


def test_ensure_finite():
    ensure_finite(np.ones(3))
    with pytest.raises(NumericGuardError):
        ensure_finite(np.array([1.0, np.nan]))
