"""Dissimilarity metrics and the diffusion regularizer.

Every metric is "lower is better" (NCC and cosine are negated internally)
and returns its value together with the analytic gradient with respect to
its *first* argument, which in the registration objective is the warped
moving image or warped/extracted moving feature map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_array

EPS = 1e-8


@dataclass(frozen=True)
class MetricValue:
    value: float
    grad: np.ndarray


def mse(a, b) -> MetricValue:
    """Mean squared error; grad w.r.t. a is 2(a-b)/N."""
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    n = a.size
    return MetricValue(float(np.mean(diff**2)), 2.0 * diff / n)


def ncc(a, b) -> MetricValue:
    """Negative global normalized cross-correlation, in [-1, 1]."""
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    n = a.size
    ac = a - a.mean()
    bc = b - b.mean()
    sa = float(np.sqrt(np.mean(ac**2)))
    sb = float(np.sqrt(np.mean(bc**2)))
    if sa == 0.0 and sb == 0.0:
        raise ValueError("NCC undefined: both images are constant")
    den = (sa + EPS) * (sb + EPS)
    cov = float(np.mean(ac * bc))
    corr = cov / den
    # d corr / da, with the sigma_a term vanishing when a is constant (cov=0)
    sa_safe = max(sa, EPS)
    grad_corr = bc / (n * den) - cov * ac / (n * sa_safe * (sa + EPS) ** 2 * (sb + EPS))
    return MetricValue(-corr, -grad_corr)


def feature_l1(fa, fb) -> MetricValue:
    """Mean absolute difference over all channels and locations; sign(0)=0."""
    fa, fb = as_array(fa), as_array(fb)
    if fa.shape != fb.shape:
        raise ValueError(f"shape mismatch {fa.shape} vs {fb.shape}")
    diff = fa - fb
    return MetricValue(float(np.mean(np.abs(diff))), np.sign(diff) / fa.size)


def _neg_cosine_per_location(fa: np.ndarray, fb: np.ndarray) -> MetricValue:
    # channel vectors live on axis 0; spatial axes follow
    na = np.sqrt((fa**2).sum(axis=0))
    nb = np.sqrt((fb**2).sum(axis=0))
    dot = (fa * fb).sum(axis=0)
    cos = dot / ((na + EPS) * (nb + EPS))
    n_loc = cos.size
    value = -float(np.mean(cos))
    na_safe = np.maximum(na, EPS)
    grad_cos = fb / ((na + EPS) * (nb + EPS)) - dot * fa / (
        na_safe * (na + EPS) ** 2 * (nb + EPS)
    )
    return MetricValue(value, -grad_cos / n_loc)


def feature_neg_cosine(fa, fb, flatten: bool = False) -> MetricValue:
    """Negative cosine similarity of channel vectors, averaged over locations.

    With ``flatten=True`` the whole map is treated as one long vector instead
    (kept for comparison; per-location is the default because it preserves
    spatial correspondence).
    """
    fa, fb = as_array(fa), as_array(fb)
    if fa.shape != fb.shape:
        raise ValueError(f"shape mismatch {fa.shape} vs {fb.shape}")
    if flatten:
        shape = fa.shape
        out = _neg_cosine_per_location(fa.reshape(-1, 1), fb.reshape(-1, 1))
        return MetricValue(out.value, out.grad.reshape(shape))
    return _neg_cosine_per_location(fa, fb)


def diffusion_regularizer(u) -> MetricValue:
    """Mean squared forward difference of the field, over pixels x components."""
    u = as_array(u)
    if u.ndim != 3 or u.shape[0] != 2:
        raise ValueError(f"expected (2,H,W) field, got {u.shape}")
    n = u.size  # 2*H*W
    dy = u[:, 1:, :] - u[:, :-1, :]
    dx = u[:, :, 1:] - u[:, :, :-1]
    value = (np.sum(dy**2) + np.sum(dx**2)) / n
    grad = np.zeros_like(u)
    grad[:, 1:, :] += dy
    grad[:, :-1, :] -= dy
    grad[:, :, 1:] += dx
    grad[:, :, :-1] -= dx
    return MetricValue(float(value), grad * (2.0 / n))


INTENSITY_METRICS = {"mse": mse, "ncc": ncc}
FEATURE_METRICS = {"feat-l1": feature_l1, "feat-cos": feature_neg_cosine}


def get_metric(name: str):
    """Resolve a metric by its config name."""
    table = {**INTENSITY_METRICS, **FEATURE_METRICS}
    if name not in table:
        raise KeyError(f"unknown metric {name!r}; choose from {sorted(table)}")
    return table[name]
