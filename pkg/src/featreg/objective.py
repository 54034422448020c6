"""Assembly of the registration objective over control-lattice parameters.

Three variants share one evaluation path:

  baseline:     J = D_int(F, M o phi) + lam * R(phi)
  feature-only: J = D_feat(f_F, f_{M o phi}) + lam * R(phi)
  combined:     J = (1-a) * D_int + lam * R + a * D_feat

The regularizer is deliberately not scaled by the alpha weights. Gradients
are assembled analytically: metric grad -> (extractor backward when features
are computed after warping) -> warp backward -> lattice adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bspline import ControlLattice, dense_grad_to_lattice, lattice_to_dense
from .core import FeatureMap, Image2D, interp_matrix
from .features import ExternalFeatureSet, FeatureExtractor, load_external
from .metrics import (
    FEATURE_METRICS,
    INTENSITY_METRICS,
    diffusion_regularizer,
    get_metric,
)
from .resampler import (
    resample_displacement,
    resample_displacement_adjoint,
    warp_array,
    warp_array_backward,
    warp_backward,
    warp_image,
)

VARIANTS = ("baseline", "feature-only", "combined")


@dataclass(frozen=True)
class ObjectiveSpec:
    variant: str = "baseline"
    intensity_metric: str | None = "mse"
    feature_metric: str | None = None
    extractor: FeatureExtractor | None = None
    external: ExternalFeatureSet | None = None
    external_ids: tuple[str, str] | None = None  # (fixed id, moving id)
    alpha: float = 0.0
    lam: float = 120.0
    feature_mode: str = "warp-then-encode"
    feature_upscale: float = 1.0
    cosine_flatten: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.feature_mode not in ("warp-then-encode", "encode-then-warp"):
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        needs_int = self.variant in ("baseline", "combined")
        needs_feat = self.variant in ("feature-only", "combined")
        if needs_int and self.intensity_metric not in INTENSITY_METRICS:
            raise ValueError(f"variant {self.variant} needs an intensity metric")
        if needs_feat:
            if self.feature_metric not in FEATURE_METRICS:
                raise ValueError(f"variant {self.variant} needs a feature metric")
            if self.extractor is None and self.external is None:
                raise ValueError(f"variant {self.variant} needs an extractor")
            if self.feature_mode == "warp-then-encode":
                if self.extractor is None or not self.extractor.differentiable:
                    raise ValueError(
                        "warp-then-encode needs a differentiable built-in extractor"
                    )
            elif self.external is not None and self.external_ids is None:
                raise ValueError("external feature sets need external_ids (fixed, moving)")
        if self.feature_upscale <= 0:
            raise ValueError(f"feature_upscale must be positive, got {self.feature_upscale}")


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    grad: np.ndarray          # lattice-shaped (2, Ny, Nx)
    d_int: float
    d_feat: float
    reg: float


class Objective:
    """Caches per-run state (fixed features, resize operators) for evaluate()."""

    def __init__(self, spec: ObjectiveSpec, fixed: Image2D, moving: Image2D):
        spec.validate()
        if fixed.shape != moving.shape:
            raise ValueError(f"fixed {fixed.shape} vs moving {moving.shape} mismatch")
        self.spec = spec
        self.fixed = fixed
        self.moving = moving
        self._needs_int = spec.variant in ("baseline", "combined")
        self._needs_feat = spec.variant in ("feature-only", "combined")
        self._w_int = 1.0 if spec.variant == "baseline" else 1.0 - spec.alpha
        self._w_feat = 1.0 if spec.variant == "feature-only" else spec.alpha
        if spec.variant == "combined" and spec.alpha == 0.0:
            self._needs_feat = False
        if spec.variant == "combined" and spec.alpha == 1.0:
            self._needs_int = False

        self._ry = self._rx = None
        if self._needs_feat:
            if spec.feature_mode == "warp-then-encode":
                self._f_fixed = self._encode(fixed)
            else:
                f_fix, f_mov = self._external_pair()
                self._f_fixed = f_fix
                self._f_moving = f_mov

    # -- feature plumbing -------------------------------------------------

    def _upscaled(self, img: Image2D) -> Image2D:
        f = self.spec.feature_upscale
        if f == 1.0:
            return img
        h2 = int(round(img.shape[0] * f))
        w2 = int(round(img.shape[1] * f))
        if self._ry is None:
            self._ry = interp_matrix(h2, img.shape[0])
            self._rx = interp_matrix(w2, img.shape[1])
        data = self._ry @ img.data @ self._rx.T
        return Image2D(data, (img.spacing[0] / f, img.spacing[1] / f), img.origin)

    def _encode(self, img: Image2D) -> FeatureMap:
        return self.spec.extractor.extract(self._upscaled(img))

    def _encode_backward(self, img: Image2D, upstream: np.ndarray) -> np.ndarray:
        g = self.spec.extractor.backward(self._upscaled(img), upstream)
        if self.spec.feature_upscale != 1.0:
            g = self._ry.T @ g @ self._rx
        return g

    def _external_pair(self):
        spec = self.spec
        if spec.external is not None:
            fid, mid = spec.external_ids
            return (load_external(spec.external, fid), load_external(spec.external, mid))
        # encode-then-warp with a built-in extractor: both maps precomputed
        return (self._encode(self.fixed), self._encode(self.moving))

    def _feature_metric(self, fa, fb):
        fn = get_metric(self.spec.feature_metric)
        if self.spec.feature_metric == "feat-cos":
            return fn(fa, fb, flatten=self.spec.cosine_flatten)
        return fn(fa, fb)

    # -- evaluation --------------------------------------------------------

    def evaluate(self, lattice: ControlLattice) -> ObjectiveEval:
        spec = self.spec
        u = lattice_to_dense(lattice)
        grad = np.zeros_like(lattice.params)
        d_int = d_feat = reg = 0.0

        if self._needs_int:
            warped = warp_image(self.moving, u)
            m = get_metric(spec.intensity_metric)(warped, self.fixed)
            d_int = m.value
            g_u = warp_backward(self.moving, u, self._w_int * m.grad)
            grad += dense_grad_to_lattice(g_u, lattice)

        if self._needs_feat:
            if spec.feature_mode == "warp-then-encode":
                warped = warp_image(self.moving, u)
                f_warped = self._encode(warped)
                m = self._feature_metric(f_warped.data, self._f_fixed.data)
                d_feat = m.value
                g_img = self._encode_backward(warped, self._w_feat * m.grad)
                g_u = warp_backward(self.moving, u, g_img)
            else:
                uf = resample_displacement(u, self._f_moving.grid_shape)
                f_warped = warp_array(self._f_moving.data, uf.data)
                m = self._feature_metric(f_warped, self._f_fixed.data)
                d_feat = m.value
                g_uf = warp_array_backward(
                    self._f_moving.data, uf.data, self._w_feat * m.grad
                )
                g_u = resample_displacement_adjoint(
                    g_uf, self._f_moving.grid_shape, u.grid_shape
                )
            grad += dense_grad_to_lattice(g_u, lattice)

        if spec.lam != 0.0:
            r = diffusion_regularizer(u)
            reg = r.value
            grad += dense_grad_to_lattice(spec.lam * r.grad, lattice)

        if spec.variant == "baseline":
            value = d_int + spec.lam * reg
        elif spec.variant == "feature-only":
            value = d_feat + spec.lam * reg
        else:
            value = self._w_int * d_int + spec.lam * reg + self._w_feat * d_feat
        return ObjectiveEval(float(value), grad, float(d_int), float(d_feat), float(reg))


def evaluate(spec: ObjectiveSpec, fixed: Image2D, moving: Image2D, lattice: ControlLattice):
    """One-shot objective evaluation; returns (value, lattice gradient)."""
    out = Objective(spec, fixed, moving).evaluate(lattice)
    return out.value, out.grad


def baseline_equivalent(spec: ObjectiveSpec) -> ObjectiveSpec:
    """The pure intensity spec a combined spec degenerates to at alpha=0."""
    return replace(spec, variant="baseline", alpha=0.0)


def feature_only_equivalent(spec: ObjectiveSpec) -> ObjectiveSpec:
    """The pure feature-distance spec a combined spec degenerates to at alpha=1."""
    return replace(spec, variant="feature-only", alpha=0.0)
