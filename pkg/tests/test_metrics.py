import numpy as np
import pytest

from featreg.metrics import (
    diffusion_regularizer,
    feature_l1,
    feature_neg_cosine,
    get_metric,
    mse,
    ncc,
)


def directional_fd(fn, a, b, grad, rng, h=1e-4, rel_tol=1e-5):
    """Central finite differences of fn(a, b) along a random direction."""
    d = rng.normal(size=a.shape)
    fd = (fn(a + h * d, b).value - fn(a - h * d, b).value) / (2 * h)
    an = float(np.sum(grad * d))
    assert abs(fd - an) / max(abs(fd), abs(an), 1e-300) < rel_tol


class TestMSE:
    def test_equal_inputs(self, rng):
        a = rng.normal(size=(8, 8))
        out = mse(a, a)
        assert out.value == 0.0
        assert np.array_equal(out.grad, np.zeros_like(a))

    def test_arithmetic(self):
        assert mse(np.array([0.0, 1.0]), np.array([1.0, 1.0])).value == 0.5

    def test_gradient_fd(self, rng):
        for _ in range(100):
            a = rng.normal(size=(16, 16))
            b = rng.normal(size=(16, 16))
            directional_fd(mse, a, b, mse(a, b).grad, rng, rel_tol=1e-7)


class TestNCC:
    def test_self_correlation(self, rng):
        a = rng.normal(size=(16, 16))
        assert abs(ncc(a, a).value + 1.0) < 1e-6

    def test_affine_invariance(self, rng):
        a = rng.normal(size=(16, 16))
        assert abs(ncc(a, 2.0 * a + 3.0).value + 1.0) < 1e-6

    def test_both_constant_rejected(self):
        with pytest.raises(ValueError):
            ncc(np.full((4, 4), 1.0), np.full((4, 4), 2.0))

    def test_gradient_fd(self, rng):
        for _ in range(100):
            a = rng.normal(size=(16, 16))
            b = rng.normal(size=(16, 16))
            directional_fd(ncc, a, b, ncc(a, b).grad, rng)

    def test_scale_shift_invariance_property(self, rng):
        a = rng.normal(size=(12, 12))
        b = rng.normal(size=(12, 12))
        base = ncc(a, b).value
        for alpha, beta in [(2.0, 1.0), (0.3, -4.0), (10.0, 0.0)]:
            assert abs(ncc(a, alpha * b + beta).value - base) < 1e-6


class TestFeatureL1:
    def test_equal(self, rng):
        f = rng.normal(size=(4, 8, 8))
        assert feature_l1(f, f).value == 0.0

    def test_arithmetic(self):
        assert feature_l1(np.array([1.0, -1.0]), np.array([0.0, 0.0])).value == 1.0

    def test_subgradient_at_ties(self):
        fa = np.array([1.0, 2.0, 3.0])
        fb = np.array([1.0, 0.0, 5.0])
        out = feature_l1(fa, fb)
        assert out.grad[0] == 0.0  # sign(0) = 0
        assert out.grad[1] == pytest.approx(1 / 3)
        assert out.grad[2] == pytest.approx(-1 / 3)


class TestNegCosine:
    def test_self(self, rng):
        f = rng.normal(size=(8, 6, 6))
        assert abs(feature_neg_cosine(f, f).value + 1.0) < 1e-6

    def test_scale_invariance(self, rng):
        f = rng.normal(size=(8, 6, 6))
        assert abs(feature_neg_cosine(f, 2.0 * f).value + 1.0) < 1e-6

    def test_orthogonal(self):
        fa = np.zeros((2, 3, 3))
        fb = np.zeros((2, 3, 3))
        fa[0] = 1.0
        fb[1] = 1.0
        assert abs(feature_neg_cosine(fa, fb).value) < 1e-7

    def test_per_location_scaling_invariance(self, rng):
        fa = rng.normal(size=(4, 5, 5))
        fb = rng.normal(size=(4, 5, 5))
        scale = rng.uniform(0.5, 3.0, size=(5, 5))
        v1 = feature_neg_cosine(fa, fb).value
        v2 = feature_neg_cosine(fa * scale, fb).value
        assert abs(v1 - v2) < 1e-6

    def test_gradient_fd(self, rng):
        for _ in range(100):
            fa = rng.normal(size=(4, 8, 8))
            fb = rng.normal(size=(4, 8, 8))
            out = feature_neg_cosine(fa, fb)
            directional_fd(feature_neg_cosine, fa, fb, out.grad, rng)

    def test_flatten_mode_differs(self, rng):
        fa = rng.normal(size=(4, 5, 5))
        fb = rng.normal(size=(4, 5, 5))
        per_loc = feature_neg_cosine(fa, fb).value
        flat = feature_neg_cosine(fa, fb, flatten=True).value
        assert per_loc != flat

    def test_flatten_gradient_fd(self, rng):
        fa = rng.normal(size=(4, 5, 5))
        fb = rng.normal(size=(4, 5, 5))
        out = feature_neg_cosine(fa, fb, flatten=True)
        fn = lambda a, b: feature_neg_cosine(a, b, flatten=True)
        directional_fd(fn, fa, fb, out.grad, rng)


class TestDiffusionRegularizer:
    def test_constant_field(self):
        u = np.stack([np.full((8, 8), 3.0), np.full((8, 8), -1.0)])
        out = diffusion_regularizer(u)
        assert out.value == 0.0
        assert np.array_equal(out.grad, np.zeros_like(u))

    def test_row_example(self):
        # ux = x on a 1x3 row: two unit forward differences over
        # 3 pixels x 2 components
        u = np.zeros((2, 1, 3))
        u[1] = np.array([[0.0, 1.0, 2.0]])
        assert diffusion_regularizer(u).value == pytest.approx(2.0 / 6.0)

    def test_gradient_fd(self, rng):
        h = 1e-5
        for _ in range(20):
            u = rng.normal(size=(2, 10, 10))
            out = diffusion_regularizer(u)
            d = rng.normal(size=u.shape)
            fd = (
                diffusion_regularizer(u + h * d).value
                - diffusion_regularizer(u - h * d).value
            ) / (2 * h)
            an = float(np.sum(out.grad * d))
            assert abs(fd - an) / max(abs(fd), 1e-300) < 1e-6


class TestSharedContracts:
    @pytest.mark.parametrize("name", ["mse", "ncc", "feat-l1", "feat-cos"])
    def test_value_symmetry(self, name, rng):
        fn = get_metric(name)
        a = rng.normal(size=(4, 8, 8))
        b = rng.normal(size=(4, 8, 8))
        tol = 1e-9 if name in ("ncc", "feat-cos") else 1e-12
        assert abs(fn(a, b).value - fn(b, a).value) < tol

    @pytest.mark.parametrize("name", ["mse", "ncc", "feat-cos"])
    def test_zero_grad_at_self(self, name, rng):
        fn = get_metric(name)
        a = rng.normal(size=(4, 8, 8))
        assert np.abs(fn(a, a).grad).max() < 1e-8

    @pytest.mark.parametrize("name", ["mse", "ncc", "feat-l1", "feat-cos"])
    def test_shape_mismatch(self, name, rng):
        fn = get_metric(name)
        with pytest.raises(ValueError):
            fn(rng.normal(size=(4, 4)), rng.normal(size=(5, 4)))

    def test_unknown_metric(self):
        with pytest.raises(KeyError):
            get_metric("mutual-information")
