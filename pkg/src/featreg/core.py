"""Domain types shared by the whole toolkit, plus basic image preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True)
class Image2D:
    """Scalar image on a regular grid with physical spacing (mm/pixel)."""

    data: np.ndarray                       # (H, W)
    spacing: tuple[float, float] = (1.0, 1.0)   # (sy, sx)
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError(f"Image2D data must be 2-d, got shape {data.shape}")
        if data.shape[0] < 4 or data.shape[1] < 4:
            raise ValueError(f"Image2D must be at least 4x4, got {data.shape}")
        if self.spacing[0] <= 0 or self.spacing[1] <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        _check_finite(data, "Image2D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FeatureMap:
    """C-channel feature grid at its own spatial resolution."""

    data: np.ndarray                       # (C, Hf, Wf)
    spacing: tuple[float, float] = (1.0, 1.0)   # mm per feature cell
    source_tag: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ValueError(f"FeatureMap data must be 3-d (C,Hf,Wf), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1 or data.shape[2] < 1:
            raise ValueError(f"FeatureMap dims must be >= 1, got {data.shape}")
        _check_finite(data, "FeatureMap")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[1:]


@dataclass(frozen=True)
class DisplacementField:
    """Dense per-pixel displacement (uy, ux) in pixels of the grid it lives on."""

    data: np.ndarray                       # (2, H, W)
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or data.shape[0] != 2:
            raise ValueError(f"DisplacementField data must be (2,H,W), got {data.shape}")
        _check_finite(data, "DisplacementField")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    @classmethod
    def zero(cls, shape: tuple[int, int], spacing=(1.0, 1.0)) -> "DisplacementField":
        return cls(np.zeros((2,) + tuple(shape)), spacing)


@dataclass(frozen=True)
class SegmentationMap:
    """Integer label image; background is label 0 by convention."""

    data: np.ndarray                       # (H, W) int
    label_set: frozenset = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"SegmentationMap data must be integer, got {data.dtype}")
        if data.ndim != 2:
            raise ValueError(f"SegmentationMap data must be 2-d, got {data.shape}")
        object.__setattr__(self, "data", data)
        labels = frozenset(int(v) for v in np.unique(data))
        if self.label_set is None:
            object.__setattr__(self, "label_set", labels)
        else:
            declared = frozenset(int(v) for v in self.label_set)
            if not labels <= declared:
                raise ValueError(f"labels {sorted(labels - declared)} not in label_set")
            object.__setattr__(self, "label_set", declared)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def normalize_intensity(img: Image2D) -> Image2D:
    """Affinely rescale intensities to [0, 1]; a constant image maps to zeros."""
    lo = float(img.data.min())
    hi = float(img.data.max())
    if hi == lo:
        out = np.zeros_like(img.data)
    else:
        out = (img.data - lo) / (hi - lo)
    return Image2D(out, img.spacing, img.origin)


def interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Align-corners 1-d linear interpolation matrix of shape (n_out, n_in)."""
    if n_out < 1 or n_in < 1:
        raise ValueError("sizes must be >= 1")
    mat = np.zeros((n_out, n_in))
    if n_in == 1:
        mat[:, 0] = 1.0
        return mat
    if n_out == 1:
        pos = np.array([0.0])
    else:
        pos = np.linspace(0.0, n_in - 1.0, n_out)
    i0 = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    w = pos - i0
    rows = np.arange(n_out)
    mat[rows, i0] += 1.0 - w
    mat[rows, i0 + 1] += w
    return mat


def resize_bilinear(arr: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Separable align-corners bilinear resize of a 2-d array."""
    ry = interp_matrix(out_shape[0], arr.shape[0])
    rx = interp_matrix(out_shape[1], arr.shape[1])
    return ry @ arr @ rx.T


def upscale(img: Image2D, factor: float) -> Image2D:
    """Bilinear rescale by ``factor``; output size round(H*f) x round(W*f)."""
    if factor <= 0:
        raise ValueError(f"factor must be positive, got {factor}")
    h2 = int(round(img.shape[0] * factor))
    w2 = int(round(img.shape[1] * factor))
    if h2 < 1 or w2 < 1:
        raise ValueError(f"upscale by {factor} gives empty output {h2}x{w2}")
    if factor == 1.0:
        return img
    out = resize_bilinear(img.data, (h2, w2))
    spacing = (img.spacing[0] / factor, img.spacing[1] / factor)
    return Image2D(out, spacing, img.origin)


def as_array(x) -> np.ndarray:
    """Unwrap a domain type to its ndarray, or pass an ndarray through."""
    if isinstance(x, (Image2D, FeatureMap, DisplacementField, SegmentationMap)):
        return x.data
    return np.asarray(x)
