"""Cubic B-spline free-form deformation.

A coarse (2, Ny, Nx) lattice of control-point displacements defines a smooth
dense displacement field through the tensor-product cubic B-spline basis.
The interior (Ny-3) x (Nx-3) knot cells tile the image exactly, so the knot
spacing is (H-1)/(Ny-3) pixels; border control points extend the support
past the image edge.

The lattice -> dense map is linear and separable, so it is evaluated as
``By @ params @ Bx.T`` per component with precomputed basis matrices, and the
adjoint (dense gradient -> lattice gradient) is the exact transpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import DisplacementField, _check_finite


def cubic_bspline_weights(u: float) -> tuple[float, float, float, float]:
    """The four cubic B-spline basis values at local coordinate u in [0, 1)."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must be in [0, 1), got {u}")
    return _weights_unchecked(u)


def _weights_unchecked(u):
    w0 = (1.0 - u) ** 3 / 6.0
    w1 = (3.0 * u**3 - 6.0 * u**2 + 4.0) / 6.0
    w2 = (-3.0 * u**3 + 3.0 * u**2 + 3.0 * u + 1.0) / 6.0
    w3 = u**3 / 6.0
    return (w0, w1, w2, w3)


@lru_cache(maxsize=64)
def basis_matrix(n_px: int, n_ctrl: int) -> np.ndarray:
    """Dense (n_px, n_ctrl) cubic B-spline evaluation matrix.

    Pixel y maps to lattice coordinate t = y / h with h = (n_px-1)/(n_ctrl-3);
    the last pixel lands exactly on the final interior knot (u = 1 in the
    last cell, where the basis values coincide with u = 0 of the next cell).
    """
    if n_ctrl < 4:
        raise ValueError(f"need at least 4 control points, got {n_ctrl}")
    if n_px < 2:
        raise ValueError(f"need at least 2 pixels, got {n_px}")
    h = (n_px - 1) / (n_ctrl - 3)
    t = np.arange(n_px) / h
    i = np.minimum(np.floor(t).astype(int), n_ctrl - 4)
    u = t - i
    w = np.stack(_weights_unchecked(u), axis=1)  # (n_px, 4)
    mat = np.zeros((n_px, n_ctrl))
    rows = np.arange(n_px)
    for l in range(4):
        mat[rows, i + l] += w[:, l]
    return mat


@dataclass(frozen=True)
class ControlLattice:
    """B-spline FFD parameters for a target grid of shape ``grid_shape``."""

    params: np.ndarray                 # (2, Ny, Nx), pixel units
    grid_shape: tuple[int, int]        # (H, W)

    def __post_init__(self):
        params = np.asarray(self.params, dtype=np.float64)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "grid_shape", tuple(int(s) for s in self.grid_shape))
        if params.ndim != 3 or params.shape[0] != 2:
            raise ValueError(f"params must be (2,Ny,Nx), got {params.shape}")
        if params.shape[1] < 4 or params.shape[2] < 4:
            raise ValueError(f"lattice must be at least 4x4, got {params.shape[1:]}")
        if self.grid_shape[0] < 2 or self.grid_shape[1] < 2:
            raise ValueError(f"grid_shape too small: {self.grid_shape}")
        _check_finite(params, "ControlLattice")

    @property
    def lattice_shape(self) -> tuple[int, int]:
        return self.params.shape[1:]

    @property
    def knot_spacing(self) -> tuple[float, float]:
        (h, w), (ny, nx) = self.grid_shape, self.lattice_shape
        return ((h - 1) / (ny - 3), (w - 1) / (nx - 3))

    @classmethod
    def zero(cls, lattice_shape: tuple[int, int], grid_shape: tuple[int, int]):
        return cls(np.zeros((2,) + tuple(lattice_shape)), grid_shape)


@dataclass(frozen=True)
class JacobianMap:
    """det(grad phi) per pixel; 1 everywhere for the identity transform."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        _check_finite(data, "JacobianMap")


def lattice_to_dense(lat: ControlLattice, spacing=(1.0, 1.0)) -> DisplacementField:
    """Evaluate the tensor-product cubic B-spline field on the full grid."""
    by = basis_matrix(lat.grid_shape[0], lat.lattice_shape[0])
    bx = basis_matrix(lat.grid_shape[1], lat.lattice_shape[1])
    dense = np.stack([by @ lat.params[k] @ bx.T for k in range(2)])
    return DisplacementField(dense, spacing)


def dense_grad_to_lattice(grad: np.ndarray, lat: ControlLattice) -> np.ndarray:
    """Exact adjoint of :func:`lattice_to_dense`: dense grad -> lattice grad."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (2,) + lat.grid_shape:
        raise ValueError(f"grad shape {grad.shape} != (2,{lat.grid_shape})")
    by = basis_matrix(lat.grid_shape[0], lat.lattice_shape[0])
    bx = basis_matrix(lat.grid_shape[1], lat.lattice_shape[1])
    return np.stack([by.T @ grad[k] @ bx for k in range(2)])


def jacobian_determinant(u: DisplacementField) -> JacobianMap:
    """det(I + grad u) with central differences (one-sided at borders)."""
    uy, ux = u.data
    duy_dy, duy_dx = np.gradient(uy)
    dux_dy, dux_dx = np.gradient(ux)
    det = (1.0 + duy_dy) * (1.0 + dux_dx) - duy_dx * dux_dy
    return JacobianMap(det)
