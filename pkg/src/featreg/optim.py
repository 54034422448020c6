"""The iterative registration loop over control-lattice parameters."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bspline import ControlLattice, lattice_to_dense
from .core import DisplacementField, Image2D
from .objective import Objective, ObjectiveSpec


class NumericalAbort(RuntimeError):
    """Objective became non-finite; carries the iteration and term values."""

    def __init__(self, iteration: int, terms: dict):
        self.iteration = iteration
        self.terms = terms
        super().__init__(f"non-finite objective at iteration {iteration}: {terms}")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"            # "adam" | "gradient-descent"
    lr: float = 5e-4
    iterations: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.method not in ("adam", "gradient-descent"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass
class RegistrationResult:
    lattice: ControlLattice
    displacement: DisplacementField
    trajectory: list = field(default_factory=list)  # (J, d_int, d_feat, reg) per iter
    elapsed_s: float = 0.0
    config: dict = field(default_factory=dict)

    def trajectory_dict(self) -> dict:
        cols = list(zip(*self.trajectory)) if self.trajectory else [[], [], [], []]
        return {
            "objective": list(cols[0]),
            "d_intensity": list(cols[1]),
            "d_feature": list(cols[2]),
            "regularizer": list(cols[3]),
        }


def register(
    fixed: Image2D,
    moving: Image2D,
    spec: ObjectiveSpec,
    opt: OptimizerConfig = OptimizerConfig(),
    lattice_shape: tuple[int, int] = (24, 24),
) -> RegistrationResult:
    """Minimize the objective from the zero (identity) lattice.

    Runs exactly ``opt.iterations`` steps, logging the term values at every
    iterate. Deterministic for fixed inputs; aborts with a diagnostic if the
    objective or gradient goes non-finite.
    """
    opt.validate()
    objective = Objective(spec, fixed, moving)
    params = np.zeros((2,) + tuple(lattice_shape))
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    trajectory = []
    t0 = time.perf_counter()
    for it in range(opt.iterations):
        lattice = ControlLattice(params, fixed.shape)
        out = objective.evaluate(lattice)
        terms = {
            "objective": out.value,
            "d_intensity": out.d_int,
            "d_feature": out.d_feat,
            "regularizer": out.reg,
        }
        if not np.isfinite(out.value) or not np.all(np.isfinite(out.grad)):
            raise NumericalAbort(it, terms)
        trajectory.append((out.value, out.d_int, out.d_feat, out.reg))
        if opt.method == "adam":
            m = opt.beta1 * m + (1 - opt.beta1) * out.grad
            v = opt.beta2 * v + (1 - opt.beta2) * out.grad**2
            m_hat = m / (1 - opt.beta1 ** (it + 1))
            v_hat = v / (1 - opt.beta2 ** (it + 1))
            params = params - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        else:
            params = params - opt.lr * out.grad
    elapsed = time.perf_counter() - t0
    final = ControlLattice(params, fixed.shape)
    field_final = lattice_to_dense(final, fixed.spacing)
    config = {
        "optimizer": asdict(opt),
        "lattice_shape": list(lattice_shape),
        "objective": {
            "variant": spec.variant,
            "intensity_metric": spec.intensity_metric,
            "feature_metric": spec.feature_metric,
            "extractor": getattr(spec.extractor, "name", None)
            or (spec.external.extractor if spec.external else None),
            "alpha": spec.alpha,
            "lambda": spec.lam,
            "feature_mode": spec.feature_mode,
            "feature_upscale": spec.feature_upscale,
        },
    }
    return RegistrationResult(final, field_final, trajectory, elapsed, config)
