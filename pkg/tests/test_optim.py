import numpy as np
import pytest

from conftest import smooth_image
from featreg.core import DisplacementField, Image2D
from featreg.objective import ObjectiveSpec
from featreg.optim import NumericalAbort, OptimizerConfig, RegistrationResult, register
from featreg.resampler import warp_image


def shifted_pair(seed=0, size=32, shift=1.5):
    fixed = smooth_image(seed, size)
    u = DisplacementField(
        np.stack([np.zeros((size, size)), np.full((size, size), shift)])
    )
    moving = warp_image(fixed, u)
    return fixed, moving


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ValueError):
            OptimizerConfig(method="lbfgs").validate()

    def test_bad_lr(self):
        with pytest.raises(ValueError):
            OptimizerConfig(lr=0.0).validate()

    def test_bad_iterations(self):
        with pytest.raises(ValueError):
            OptimizerConfig(iterations=0).validate()


class TestRegister:
    def test_trajectory_length_and_descent(self):
        fixed, moving = shifted_pair()
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.01)
        opt = OptimizerConfig(lr=0.1, iterations=60)
        res = register(fixed, moving, spec, opt, lattice_shape=(6, 6))
        assert len(res.trajectory) == 60
        first = res.trajectory[0][0]
        last = res.trajectory[-1][0]
        assert last < first

    def test_identical_images_stay_at_identity(self):
        img = smooth_image(1)
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.01)
        opt = OptimizerConfig(lr=0.05, iterations=10)
        res = register(img, img, spec, opt, lattice_shape=(6, 6))
        # zero gradient throughout; Adam never moves off the zero lattice
        assert np.array_equal(res.lattice.params, np.zeros((2, 6, 6)))
        assert all(row[0] == 0.0 for row in res.trajectory)

    def test_deterministic_bitwise(self):
        fixed, moving = shifted_pair(seed=2)
        spec = ObjectiveSpec(intensity_metric="ncc", lam=0.05)
        opt = OptimizerConfig(lr=0.05, iterations=25)
        a = register(fixed, moving, spec, opt, lattice_shape=(6, 6))
        b = register(fixed, moving, spec, opt, lattice_shape=(6, 6))
        assert a.lattice.params.tobytes() == b.lattice.params.tobytes()
        assert a.trajectory == b.trajectory

    def test_gradient_descent_single_step(self):
        fixed, moving = shifted_pair(seed=3)
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.0)
        opt = OptimizerConfig(method="gradient-descent", lr=0.25, iterations=1)
        res = register(fixed, moving, spec, opt, lattice_shape=(6, 6))
        # one plain step: params = -lr * grad at the zero lattice
        from featreg.bspline import ControlLattice
        from featreg.objective import Objective

        out = Objective(spec, fixed, moving).evaluate(
            ControlLattice.zero((6, 6), fixed.shape)
        )
        assert np.array_equal(res.lattice.params, -0.25 * out.grad)

    def test_config_echo(self):
        fixed, moving = shifted_pair(seed=4)
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.3)
        opt = OptimizerConfig(lr=0.01, iterations=2)
        res = register(fixed, moving, spec, opt, lattice_shape=(5, 7))
        assert res.config["lattice_shape"] == [5, 7]
        assert res.config["optimizer"]["lr"] == 0.01
        assert res.config["objective"]["lambda"] == 0.3
        assert res.elapsed_s > 0.0
        assert res.displacement.data.shape == (2,) + fixed.shape

    def test_trajectory_dict_columns(self):
        fixed, moving = shifted_pair(seed=5)
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.2)
        res = register(fixed, moving, spec, OptimizerConfig(lr=0.01, iterations=3),
                       lattice_shape=(6, 6))
        d = res.trajectory_dict()
        assert set(d) == {"objective", "d_intensity", "d_feature", "regularizer"}
        assert all(len(v) == 3 for v in d.values())
        assert d["d_feature"] == [0.0, 0.0, 0.0]


class TestNumericalAbort:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_abort_carries_iteration_and_terms(self):
        # intensities are finite but their squared difference overflows,
        # so the first MSE evaluation is already non-finite
        rng = np.random.default_rng(6)
        fixed = Image2D(rng.uniform(0.5, 1.0, size=(16, 16)) * 1e200)
        moving = Image2D(-rng.uniform(0.5, 1.0, size=(16, 16)) * 1e200)
        spec = ObjectiveSpec(intensity_metric="mse", lam=0.0)
        opt = OptimizerConfig(method="gradient-descent", lr=1.0, iterations=5)
        with pytest.raises(NumericalAbort) as exc:
            register(fixed, moving, spec, opt, lattice_shape=(6, 6))
        assert exc.value.iteration == 0
        assert "objective" in exc.value.terms
        assert not np.isfinite(exc.value.terms["d_intensity"])
