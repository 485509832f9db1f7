import numpy as np
import pytest

from stylediff.numerics import DimensionError, RngStream
from stylediff import style
from stylediff.style import (
    MAE,
    MSE,
    PyramidConfig,
    StyleFeatures,
    batch_vectors,
    equal_weights,
    extract,
    feature_variance,
    feature_variance_grad,
    mixed_features,
    style_distance,
    style_distance_grad,
    vector_backprop,
)

CFG2 = PyramidConfig(levels=2)
W2 = equal_weights(2)


class TestExtract:
    def test_hand_values_2x2_single_level(self):
        img = np.array([[0.0, 0.0], [1.0, 1.0]])[..., None]
        f = extract(img, PyramidConfig(levels=1), equal_weights(1))
        # identity channel: mean 0.5, population std sqrt(0.25 + eps)
        np.testing.assert_allclose(f.means[0][0], 0.5, rtol=1e-12)
        np.testing.assert_allclose(f.stds[0][0], 0.5, atol=1e-7)
        # dx is zero everywhere, dy is 1 on the top row and 0 on the bottom
        np.testing.assert_allclose(f.means[0][1], 0.0, atol=1e-12)
        np.testing.assert_allclose(f.means[0][2], 0.5, rtol=1e-12)

    def test_constant_image_stats(self):
        img = np.full((16, 16, 3), 0.3)
        f = extract(img, PyramidConfig(), equal_weights(4))
        for l in range(4):
            np.testing.assert_allclose(f.means[l][:3], 0.3, rtol=1e-12)
            np.testing.assert_allclose(f.means[l][3:], 0.0, atol=1e-12)
            np.testing.assert_allclose(f.stds[l], np.sqrt(1e-8), rtol=1e-9)

    def test_vector_dimension_default(self):
        img = RngStream(0).generator().standard_normal((16, 16, 3))
        f = extract(img, PyramidConfig(), equal_weights(4))
        assert f.dim == 72 and f.vector.shape == (72,)
        assert len(f.csv_header()) == 72 and len(f.csv_row()) == 72

    def test_weight_doubling_doubles_vector(self):
        img = RngStream(1).generator().standard_normal((8, 8, 2))
        f1 = extract(img, CFG2, W2)
        f2 = extract(img, CFG2, 2.0 * W2)
        np.testing.assert_allclose(f2.vector, 2.0 * f1.vector, rtol=1e-12)

    def test_identity_stats_permutation_invariant(self):
        gen = RngStream(2).generator()
        img = gen.standard_normal((4, 4, 1))
        perm = img.reshape(-1)[gen.permutation(16)].reshape(4, 4, 1)
        fa = extract(img, PyramidConfig(levels=1), equal_weights(1))
        fb = extract(perm, PyramidConfig(levels=1), equal_weights(1))
        np.testing.assert_allclose(fa.means[0][0], fb.means[0][0], rtol=1e-12)
        np.testing.assert_allclose(fa.stds[0][0], fb.stds[0][0], rtol=1e-12)

    def test_batch_vectors_match_per_image_extract(self):
        imgs = RngStream(3).generator().standard_normal((3, 8, 8, 2))
        vecs = batch_vectors(imgs, CFG2, W2)
        for i in range(3):
            np.testing.assert_allclose(
                vecs[i], extract(imgs[i], CFG2, W2).vector, rtol=1e-12
            )

    def test_input_validation(self):
        with pytest.raises(DimensionError):
            extract(np.zeros((4, 4)), CFG2, W2)
        with pytest.raises(DimensionError):
            extract(np.zeros((2, 8, 1)), PyramidConfig(levels=3), equal_weights(3))
        with pytest.raises(DimensionError):
            extract(np.zeros((8, 8, 1)), CFG2, [1.0])
        with pytest.raises(DimensionError):
            extract(np.zeros((8, 8, 1)), CFG2, [1.0, -1.0])

    def test_pyramid_config_validation(self):
        with pytest.raises(DimensionError):
            PyramidConfig(levels=0)
        with pytest.raises(DimensionError):
            PyramidConfig(epsilon_var=0.0)
        assert PyramidConfig(levels=4).min_dim == 16


class TestStyleDistance:
    def test_zero_on_self(self):
        img = RngStream(4).generator().standard_normal((8, 8, 3))
        f = extract(img, CFG2, W2)
        assert style_distance(f, f, MAE) == 0.0
        assert style_distance(f, f, MSE) == 0.0

    def test_matches_direct_recomputation(self):
        gen = RngStream(5).generator()
        fa = extract(gen.standard_normal((8, 8, 2)), CFG2, W2)
        fb = extract(gen.standard_normal((8, 8, 2)), CFG2, W2)
        d = fa.vector - fb.vector
        np.testing.assert_allclose(style_distance(fa, fb, MAE), np.abs(d).mean(), rtol=1e-12)
        np.testing.assert_allclose(style_distance(fa, fb, MSE), (d**2).mean(), rtol=1e-12)

    def test_symmetric(self):
        gen = RngStream(6).generator()
        fa = extract(gen.standard_normal((8, 8, 1)), CFG2, W2)
        fb = extract(gen.standard_normal((8, 8, 1)), CFG2, W2)
        assert style_distance(fa, fb, MAE) == style_distance(fb, fa, MAE)

    def test_dimension_mismatch(self):
        gen = RngStream(7).generator()
        fa = extract(gen.standard_normal((8, 8, 1)), CFG2, W2)
        fb = extract(gen.standard_normal((8, 8, 2)), CFG2, W2)
        with pytest.raises(DimensionError):
            style_distance(fa, fb)

    def test_unknown_metric(self):
        f = extract(np.zeros((8, 8, 1)), CFG2, W2)
        with pytest.raises(DimensionError):
            style_distance(f, f, "cosine")


def _fd_grad(fn, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (fn(xp) - fn(xm)) / (2 * h)
    return g


class TestStyleDistanceGrad:
    @pytest.mark.parametrize("metric", [MAE, MSE])
    def test_matches_central_finite_differences(self, metric):
        gen = RngStream(8).generator()
        ref = extract(gen.standard_normal((8, 8, 1)), CFG2, W2)
        x = gen.standard_normal((8, 8, 1))
        fn = lambda im: style_distance(extract(im, CFG2, W2), ref, metric)
        fd = _fd_grad(fn, x)
        np.testing.assert_allclose(style_distance_grad(x, ref, CFG2, W2, metric), fd, atol=2e-6)

    def test_weighted_levels_finite_differences(self):
        gen = RngStream(9).generator()
        w = np.array([1.0, 3.0])
        ref = extract(gen.standard_normal((8, 8, 1)), CFG2, w)
        x = gen.standard_normal((8, 8, 1))
        fn = lambda im: style_distance(extract(im, CFG2, w), ref, MSE)
        np.testing.assert_allclose(style_distance_grad(x, ref, CFG2, w, MSE), _fd_grad(fn, x), atol=2e-6)

    @pytest.mark.parametrize("metric", [MAE, MSE])
    def test_zero_at_exact_match(self, metric):
        x = RngStream(10).generator().standard_normal((8, 8, 2))
        ref = extract(x, CFG2, W2)
        np.testing.assert_allclose(style_distance_grad(x, ref, CFG2, W2, metric), 0.0, atol=1e-15)

    def test_batched_matches_per_image(self):
        gen = RngStream(11).generator()
        ref = extract(gen.standard_normal((8, 8, 1)), CFG2, W2)
        xs = gen.standard_normal((3, 8, 8, 1))
        batched = style_distance_grad(xs, ref, CFG2, W2, MSE)
        for i in range(3):
            np.testing.assert_allclose(
                batched[i], style_distance_grad(xs[i], ref, CFG2, W2, MSE), rtol=1e-12
            )

    def test_vector_backprop_is_vjp(self):
        # directional check: d/da [vec(x + a u) . dvec] at a=0 equals
        # sum(vector_backprop(x, dvec) * u) for random u and dvec
        gen = RngStream(12).generator()
        x = gen.standard_normal((1, 8, 8, 1))
        u = gen.standard_normal((1, 8, 8, 1))
        dvec = gen.standard_normal((1, extract(x[0], CFG2, W2).dim))
        h = 1e-6
        fp = float((batch_vectors(x + h * u, CFG2, W2) * dvec).sum())
        fm = float((batch_vectors(x - h * u, CFG2, W2) * dvec).sum())
        lhs = (fp - fm) / (2 * h)
        rhs = float((vector_backprop(x, CFG2, W2, dvec) * u).sum())
        assert abs(lhs - rhs) < 1e-7


class TestMixedFeatures:
    def test_single_member_is_identity(self):
        f = extract(RngStream(13).generator().standard_normal((8, 8, 1)), CFG2, W2)
        m = mixed_features([f], RngStream(0).generator())
        np.testing.assert_array_equal(m.vector, f.vector)

    def test_each_level_copied_whole_from_a_member(self):
        gen = RngStream(14).generator()
        batch = [extract(gen.standard_normal((8, 8, 2)), CFG2, W2) for _ in range(4)]
        m = mixed_features(batch, RngStream(1).generator())
        for l in range(2):
            assert any(
                np.array_equal(m.means[l], f.means[l]) and np.array_equal(m.stds[l], f.stds[l])
                for f in batch
            )

    def test_selection_uniform_monte_carlo(self):
        gen = RngStream(15).generator()
        batch = [extract(gen.standard_normal((8, 8, 1)), CFG2, W2) for _ in range(2)]
        draws = RngStream(16).generator()
        hits = sum(
            np.array_equal(mixed_features(batch, draws).means[0], batch[0].means[0])
            for _ in range(10_000)
        )
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_generator_state_advances(self):
        gen = RngStream(17).generator()
        batch = [extract(gen.standard_normal((8, 8, 1)), CFG2, W2) for _ in range(8)]
        draws = RngStream(18).generator()
        vecs = {tuple(mixed_features(batch, draws).vector) for _ in range(50)}
        assert len(vecs) > 1

    def test_empty_batch_raises(self):
        with pytest.raises(DimensionError):
            mixed_features([], RngStream(0).generator())


class TestFeatureVariance:
    def test_identical_batch_is_zero(self):
        f = extract(RngStream(19).generator().standard_normal((8, 8, 1)), CFG2, W2)
        assert feature_variance([f, f, f]) < 1e-30

    def test_two_member_closed_form(self):
        gen = RngStream(20).generator()
        fa = extract(gen.standard_normal((8, 8, 2)), CFG2, W2)
        fb = extract(gen.standard_normal((8, 8, 2)), CFG2, W2)
        d = fa.vector - fb.vector
        expected = float((d**2).sum()) / (4 * fa.dim)
        np.testing.assert_allclose(feature_variance([fa, fb]), expected, rtol=1e-12)

    def test_needs_at_least_two(self):
        f = extract(np.zeros((8, 8, 1)), CFG2, W2)
        with pytest.raises(DimensionError):
            feature_variance([f])

    def test_grad_value_matches_feature_variance(self):
        imgs = RngStream(21).generator().standard_normal((3, 8, 8, 1))
        nu, _ = feature_variance_grad(imgs, CFG2, W2)
        feats = [extract(imgs[i], CFG2, W2) for i in range(3)]
        np.testing.assert_allclose(nu, feature_variance(feats), rtol=1e-12)

    def test_grad_matches_finite_differences(self):
        imgs = RngStream(22).generator().standard_normal((2, 8, 8, 1))
        _, grads = feature_variance_grad(imgs, CFG2, W2)

        def fn(flat):
            return feature_variance_grad(flat.reshape(imgs.shape), CFG2, W2)[0]

        fd = _fd_grad(lambda b: fn(b.reshape(-1)), imgs.reshape(-1)).reshape(imgs.shape)
        np.testing.assert_allclose(grads, fd, atol=2e-6)

    def test_grad_requires_batch(self):
        with pytest.raises(DimensionError):
            feature_variance_grad(np.zeros((8, 8, 1)), CFG2, W2)
        with pytest.raises(DimensionError):
            feature_variance_grad(np.zeros((1, 8, 8, 1)), CFG2, W2)
