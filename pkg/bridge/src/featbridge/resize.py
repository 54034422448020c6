"""Small align-corners resampling helpers (no SciPy dependency)."""

from __future__ import annotations

import numpy as np


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    mat = np.zeros((n_out, n_in))
    if n_in == 1:
        mat[:, 0] = 1.0
        return mat
    pos = np.zeros(1) if n_out == 1 else np.linspace(0.0, n_in - 1.0, n_out)
    i0 = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    w = pos - i0
    rows = np.arange(n_out)
    mat[rows, i0] += 1.0 - w
    mat[rows, i0 + 1] += w
    return mat


def resize_bilinear(arr: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Align-corners bilinear resize of the trailing two axes."""
    ry = _interp_matrix(out_shape[0], arr.shape[-2])
    rx = _interp_matrix(out_shape[1], arr.shape[-1])
    return np.einsum("ij,...jk,lk->...il", ry, arr, rx)


def resize_nearest(arr: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize; keeps integer label values intact."""
    iy = np.rint(np.linspace(0.0, arr.shape[-2] - 1.0, out_shape[0])).astype(int)
    ix = np.rint(np.linspace(0.0, arr.shape[-1] - 1.0, out_shape[1])).astype(int)
    return arr[..., iy[:, None], ix[None, :]]


def center_crop_or_pad(arr: np.ndarray, out_shape: tuple[int, int],
                       fill=0.0) -> np.ndarray:
    """Center crop (or zero-pad) the trailing two axes to out_shape."""
    out = np.full(arr.shape[:-2] + tuple(out_shape), fill, dtype=arr.dtype)
    h, w = arr.shape[-2:]
    oh, ow = out_shape
    sy = max((h - oh) // 2, 0)
    sx = max((w - ow) // 2, 0)
    dy = max((oh - h) // 2, 0)
    dx = max((ow - w) // 2, 0)
    ch = min(h, oh)
    cw = min(w, ow)
    out[..., dy:dy + ch, dx:dx + cw] = arr[..., sy:sy + ch, sx:sx + cw]
    return out
