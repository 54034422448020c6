"""Backward warping by a displacement field.

All samplers pull: out(x) = in(x + u(x)). Out-of-bounds sample positions
clamp to the border pixel, and the warp gradient is zero in clamped
directions (the interpolant is flat there).
"""

from __future__ import annotations

import numpy as np

from .core import DisplacementField, FeatureMap, Image2D, SegmentationMap, interp_matrix


def _sample_positions(shape, u: np.ndarray):
    h, w = shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    sy = gy + u[0]
    sx = gx + u[1]
    return sy, sx


def _bilinear_gather(data: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Sample the trailing two axes of ``data`` at (sy, sx) with border clamp."""
    h, w = data.shape[-2:]
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.clip(np.floor(sy).astype(int), 0, h - 2)
    x0 = np.clip(np.floor(sx).astype(int), 0, w - 2)
    wy = sy - y0
    wx = sx - x0
    v00 = data[..., y0, x0]
    v01 = data[..., y0, x0 + 1]
    v10 = data[..., y0 + 1, x0]
    v11 = data[..., y0 + 1, x0 + 1]
    return (
        (1 - wy) * (1 - wx) * v00
        + (1 - wy) * wx * v01
        + wy * (1 - wx) * v10
        + wy * wx * v11
    )


def warp_array(data: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Bilinear backward warp of the trailing two axes by u (2,H,W)."""
    if data.shape[-2:] != u.shape[-2:]:
        raise ValueError(f"image {data.shape} vs field {u.shape} shape mismatch")
    sy, sx = _sample_positions(data.shape[-2:], u)
    return _bilinear_gather(data, sy, sx)


def warp_array_backward(data: np.ndarray, u: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum(upstream * warp_array(data, u)) w.r.t. u.

    ``data`` may be (H,W) or (C,H,W); ``upstream`` matches it; the result is
    (2,H,W) (channel contributions summed).
    """
    if data.shape != upstream.shape:
        raise ValueError(f"upstream {upstream.shape} != data {data.shape}")
    h, w = data.shape[-2:]
    sy_raw, sx_raw = _sample_positions((h, w), u)
    in_y = (sy_raw > 0.0) & (sy_raw < h - 1.0)
    in_x = (sx_raw > 0.0) & (sx_raw < w - 1.0)
    sy = np.clip(sy_raw, 0.0, h - 1.0)
    sx = np.clip(sx_raw, 0.0, w - 1.0)
    y0 = np.clip(np.floor(sy).astype(int), 0, h - 2)
    x0 = np.clip(np.floor(sx).astype(int), 0, w - 2)
    wy = sy - y0
    wx = sx - x0
    v00 = data[..., y0, x0]
    v01 = data[..., y0, x0 + 1]
    v10 = data[..., y0 + 1, x0]
    v11 = data[..., y0 + 1, x0 + 1]
    d_dy = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
    d_dx = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
    gy = upstream * d_dy
    gx = upstream * d_dx
    if data.ndim == 3:
        gy = gy.sum(axis=0)
        gx = gx.sum(axis=0)
    return np.stack([gy * in_y, gx * in_x])


def warp_image(img: Image2D, u: DisplacementField) -> Image2D:
    return Image2D(warp_array(img.data, u.data), img.spacing, img.origin)


def warp_backward(img: Image2D, u: DisplacementField, upstream: np.ndarray) -> np.ndarray:
    return warp_array_backward(img.data, u.data, np.asarray(upstream, dtype=np.float64))


def resample_displacement(u: DisplacementField, new_shape: tuple[int, int]) -> DisplacementField:
    """Move a field to another grid: interpolate components (align-corners)
    and rescale values by the resolution ratio so they stay in target pixels."""
    h, w = u.grid_shape
    h2, w2 = new_shape
    if (h2, w2) == (h, w):
        return u
    ry = interp_matrix(h2, h)
    rx = interp_matrix(w2, w)
    sy = (h2 - 1) / (h - 1) if h > 1 else 1.0
    sx = (w2 - 1) / (w - 1) if w > 1 else 1.0
    uy = sy * (ry @ u.data[0] @ rx.T)
    ux = sx * (ry @ u.data[1] @ rx.T)
    spacing = (u.spacing[0] * (h / h2), u.spacing[1] * (w / w2))
    return DisplacementField(np.stack([uy, ux]), spacing)


def resample_displacement_adjoint(
    grad: np.ndarray, new_shape: tuple[int, int], old_shape: tuple[int, int]
) -> np.ndarray:
    """Adjoint of :func:`resample_displacement` (grad on new grid -> old grid)."""
    h, w = old_shape
    h2, w2 = new_shape
    if (h2, w2) == (h, w):
        return grad
    ry = interp_matrix(h2, h)
    rx = interp_matrix(w2, w)
    sy = (h2 - 1) / (h - 1) if h > 1 else 1.0
    sx = (w2 - 1) / (w - 1) if w > 1 else 1.0
    gy = sy * (ry.T @ grad[0] @ rx)
    gx = sx * (ry.T @ grad[1] @ rx)
    return np.stack([gy, gx])


def warp_features(f: FeatureMap, u: DisplacementField) -> FeatureMap:
    """Channel-wise bilinear warp; the field is resampled to the feature grid
    (and rescaled to feature pixels) if the resolutions differ."""
    uf = resample_displacement(u, f.grid_shape)
    return FeatureMap(warp_array(f.data, uf.data), f.spacing, f.source_tag)


def warp_segmentation(seg: SegmentationMap, u: DisplacementField) -> SegmentationMap:
    """Nearest-neighbor backward warp; output labels stay within the label set."""
    if seg.shape != u.grid_shape:
        raise ValueError(f"segmentation {seg.shape} vs field {u.grid_shape} mismatch")
    h, w = seg.shape
    sy, sx = _sample_positions((h, w), u.data)
    iy = np.clip(np.rint(sy).astype(int), 0, h - 1)
    ix = np.clip(np.rint(sx).astype(int), 0, w - 1)
    return SegmentationMap(seg.data[iy, ix], seg.label_set)
