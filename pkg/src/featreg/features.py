"""Feature extractors and feature-space utilities.

Two built-in differentiable extractors cover desk-scale experiments: the
identity (features == image, so feature metrics reduce to intensity metrics)
and a seeded linear filter bank with a smooth nonlinearity, a small stand-in
for frozen pretrained encoders. Real encoder features enter through
:func:`load_external`, which reads maps precomputed by the offline bridge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .core import FeatureMap, Image2D
from .npyio import load_tensor
from .resampler import warp_features, warp_image


class FeatureExtractor:
    """Deterministic map from an image to a (C, Hf, Wf) feature grid."""

    name: str = "base"
    channels: int = 1
    downsample: int = 1
    differentiable: bool = False

    def extract(self, img: Image2D) -> FeatureMap:
        raise NotImplementedError

    def backward(self, img: Image2D, upstream: np.ndarray) -> np.ndarray:
        """Grad of sum(upstream * extract(img)) w.r.t. the image pixels."""
        raise NotImplementedError

    def _feature_spacing(self, img: Image2D, grid_shape) -> tuple[float, float]:
        return (
            img.spacing[0] * img.shape[0] / grid_shape[0],
            img.spacing[1] * img.shape[1] / grid_shape[1],
        )


class IdentityExtractor(FeatureExtractor):
    name = "identity"
    channels = 1
    downsample = 1
    differentiable = True

    def extract(self, img: Image2D) -> FeatureMap:
        return FeatureMap(img.data[None], img.spacing, "identity")

    def backward(self, img: Image2D, upstream: np.ndarray) -> np.ndarray:
        return np.asarray(upstream, dtype=np.float64)[0]


def identity_extractor() -> IdentityExtractor:
    return IdentityExtractor()


def _gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _kernel_basis(radius: int = 3) -> list[np.ndarray]:
    """Gaussian-derivative / oriented band-pass kernels spanning the bank."""
    basis = []
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    for sigma in (1.0, 1.6):
        g = _gaussian_kernel_1d(sigma, radius)
        dg = -x / sigma**2 * g
        ddg = (x**2 / sigma**4 - 1 / sigma**2) * g
        basis.append(np.outer(g, g))        # smoothing
        basis.append(np.outer(g, dg))       # d/dx
        basis.append(np.outer(dg, g))       # d/dy
        basis.append(np.outer(g, ddg))      # d2/dx2
        basis.append(np.outer(ddg, g))      # d2/dy2
        basis.append(np.outer(dg, dg))      # d2/dxdy
    return basis


class FilterbankExtractor(FeatureExtractor):
    """Seeded bank of 7x7 linear kernels with a softplus nonlinearity."""

    differentiable = True

    def __init__(self, seed: int = 0, channels: int = 4, downsample: int = 2):
        if channels < 1:
            raise ValueError(f"channels must be >= 1, got {channels}")
        if downsample not in (1, 2):
            raise ValueError(f"downsample must be 1 or 2, got {downsample}")
        self.seed = seed
        self.channels = channels
        self.downsample = downsample
        self.name = f"filterbank(seed={seed},C={channels},d={downsample})"
        basis = np.stack(_kernel_basis())
        rng = np.random.default_rng(seed)
        coeff = rng.normal(size=(channels, len(basis)))
        kernels = np.einsum("cb,byx->cyx", coeff, basis)
        norms = np.sqrt((kernels**2).sum(axis=(1, 2), keepdims=True))
        self.kernels = kernels / norms
        self._radius = basis.shape[-1] // 2

    def _linear_response(self, data: np.ndarray) -> np.ndarray:
        r = self._radius
        padded = np.pad(data, r, mode="edge")
        d = self.downsample
        return np.stack(
            [signal.correlate(padded, k, mode="valid")[::d, ::d] for k in self.kernels]
        )

    def extract(self, img: Image2D) -> FeatureMap:
        y = self._linear_response(img.data)
        feats = np.logaddexp(0.0, y)  # softplus, numerically stable
        return FeatureMap(feats, self._feature_spacing(img, feats.shape[1:]), self.name)

    def backward(self, img: Image2D, upstream: np.ndarray) -> np.ndarray:
        upstream = np.asarray(upstream, dtype=np.float64)
        y = self._linear_response(img.data)
        if upstream.shape != y.shape:
            raise ValueError(f"upstream shape {upstream.shape} != {y.shape}")
        gy = upstream / (1.0 + np.exp(-y))  # softplus' = sigmoid
        r = self._radius
        h, w = img.shape
        d = self.downsample
        grad_pad = np.zeros((h + 2 * r, w + 2 * r))
        for k, g in zip(self.kernels, gy):
            full = np.zeros((h, w))
            full[::d, ::d] = g
            grad_pad += signal.convolve(full, k, mode="full")
        # adjoint of edge padding: fold the replicated borders back in
        grad = grad_pad[r:-r, r:-r].copy()
        grad[0, :] += grad_pad[:r, r:-r].sum(axis=0)
        grad[-1, :] += grad_pad[-r:, r:-r].sum(axis=0)
        grad[:, 0] += grad_pad[r:-r, :r].sum(axis=1)
        grad[:, -1] += grad_pad[r:-r, -r:].sum(axis=1)
        grad[0, 0] += grad_pad[:r, :r].sum()
        grad[0, -1] += grad_pad[:r, -r:].sum()
        grad[-1, 0] += grad_pad[-r:, :r].sum()
        grad[-1, -1] += grad_pad[-r:, -r:].sum()
        return grad


def filterbank_extractor(seed: int = 0, channels: int = 4, downsample: int = 2):
    return FilterbankExtractor(seed, channels, downsample)


@dataclass(frozen=True)
class ExternalFeatureSet:
    """Manifest of precomputed (non-differentiable) encoder feature files."""

    extractor: str
    channels: int
    entries: dict = field(default_factory=dict)  # id -> {image_path, feature_path}

    @classmethod
    def from_manifest(cls, path: str | Path) -> "ExternalFeatureSet":
        raw = json.loads(Path(path).read_text())
        entries = {e["id"]: e for e in raw["entries"]}
        base = Path(path).parent
        for e in entries.values():
            for key in ("image_path", "feature_path"):
                if not Path(e[key]).is_absolute():
                    e[key] = str(base / e[key])
        return cls(raw["extractor"], int(raw["channels"]), entries)


def load_external(feature_set: ExternalFeatureSet, image_id: str) -> FeatureMap:
    """Load one precomputed feature map, validating the declared channel count."""
    if image_id not in feature_set.entries:
        raise KeyError(f"id {image_id!r} not in feature set ({len(feature_set.entries)} entries)")
    path = feature_set.entries[image_id]["feature_path"]
    data = load_tensor(path)
    if data.ndim != 3 or data.shape[0] != feature_set.channels:
        raise ValueError(
            f"{path}: shape {data.shape} inconsistent with C={feature_set.channels}"
        )
    return FeatureMap(data, source_tag=feature_set.extractor)


def pca_project(f: FeatureMap, k: int) -> FeatureMap:
    """Top-k principal-component scores of the per-location channel vectors.

    Components are ordered by decreasing explained variance with a fixed sign
    convention (largest-magnitude loading positive). Spatially constant
    features yield all-zero scores.
    """
    c, hf, wf = f.data.shape
    n = hf * wf
    if not 1 <= k <= min(c, n):
        raise ValueError(f"k={k} out of range [1, {min(c, n)}]")
    x = f.data.reshape(c, n).T  # locations as samples
    x = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    scores = np.zeros((n, k))
    for j in range(k):
        v = vt[j]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        if s[j] > 1e-12 * max(1.0, s[0]):
            scores[:, j] = x @ v
    return FeatureMap(scores.T.reshape(k, hf, wf), f.spacing, f.source_tag + "|pca")


def commutativity_gap(img: Image2D, u, extractor: FeatureExtractor):
    """Difference between encode-after-warp and warp-after-encode features.

    Returns (gap map, mean absolute gap). Zero exactly for the identity
    extractor or a zero field; positive in general since extraction is
    nonlinear.
    """
    encoded_warped = extractor.extract(warp_image(img, u))
    warped_encoded = warp_features(extractor.extract(img), u)
    gap = encoded_warped.data - warped_encoded.data
    gap_map = FeatureMap(gap, encoded_warped.spacing, f"{extractor.name}|commutativity-gap")
    return gap_map, float(np.mean(np.abs(gap)))
