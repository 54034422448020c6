"""Registration-quality metrics: Dice, HD95, %negJdet, sdlogJ."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .bspline import jacobian_determinant
from .core import DisplacementField, SegmentationMap

SDLOGJ_DET_FLOOR = 1e-6


class EmptyMaskError(ValueError):
    """HD95 is undefined when a label's mask is empty."""


def dice(a: SegmentationMap, b: SegmentationMap, label: int) -> float:
    """Dice overlap 2|A^B| / (|A|+|B|); 1.0 when both masks are empty."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if label not in a.label_set and label not in b.label_set:
        raise ValueError(f"label {label} absent from both label sets")
    ma = a.data == label
    mb = b.data == label
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((ma & mb).sum()) / total


def boundary_points(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with a 4-neighbor outside the mask (image edge counts)."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return np.argwhere(mask & ~interior)


def _percentile_nearest_rank(values: np.ndarray, q: float) -> float:
    srt = np.sort(values)
    rank = int(np.ceil(q / 100.0 * len(srt)))
    return float(srt[max(rank, 1) - 1])


def hd95(
    a: SegmentationMap, b: SegmentationMap, label: int, spacing=(1.0, 1.0)
) -> float:
    """Symmetric 95th-percentile boundary distance in physical units (mm).

    Nearest-rank percentile of the directed boundary distances, then the max
    of the two directions.
    """
    ma = a.data == label
    mb = b.data == label
    if not ma.any() or not mb.any():
        raise EmptyMaskError(f"label {label} has an empty mask; HD95 undefined")
    pa = boundary_points(ma) * np.asarray(spacing, dtype=np.float64)
    pb = boundary_points(mb) * np.asarray(spacing, dtype=np.float64)
    d = cdist(pa, pb)
    d_ab = d.min(axis=1)
    d_ba = d.min(axis=0)
    return max(
        _percentile_nearest_rank(d_ab, 95.0), _percentile_nearest_rank(d_ba, 95.0)
    )


def pct_neg_jdet(u: DisplacementField) -> float:
    """Fraction of pixels with negative Jacobian determinant (folding)."""
    det = jacobian_determinant(u).data
    return float(np.mean(det < 0.0))


def sdlog_jdet(u: DisplacementField, det_floor: float = SDLOGJ_DET_FLOOR):
    """Standard deviation of log det(I + grad u) over pixels with det > floor.

    Returns (sd, number of excluded pixels); raises if everything is excluded.
    """
    det = jacobian_determinant(u).data
    keep = det > det_floor
    excluded = int(det.size - keep.sum())
    if not keep.any():
        raise ValueError("all pixels excluded from sdlogJ (non-positive determinants)")
    return float(np.std(np.log(det[keep]))), excluded


@dataclass
class EvalReport:
    per_class_dsc: dict = field(default_factory=dict)
    mean_dsc: float = float("nan")
    per_class_hd95: dict = field(default_factory=dict)
    mean_hd95: float = float("nan")
    pct_neg_jdet: float = float("nan")
    sdlog_jdet: float = float("nan")
    sdlogj_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "per_class_dsc": {str(k): v for k, v in self.per_class_dsc.items()},
            "mean_dsc": self.mean_dsc,
            "per_class_hd95": {str(k): v for k, v in self.per_class_hd95.items()},
            "mean_hd95": self.mean_hd95,
            "pct_neg_jdet": self.pct_neg_jdet,
            "sdlog_jdet": self.sdlog_jdet,
            "sdlogj_excluded": self.sdlogj_excluded,
        }


def evaluate_registration(
    seg_fixed: SegmentationMap,
    seg_warped: SegmentationMap,
    displacement: DisplacementField | None = None,
    labels: list[int] | None = None,
    spacing=(1.0, 1.0),
) -> EvalReport:
    """Full report over the foreground labels (everything but 0 by default)."""
    if labels is None:
        labels = sorted(set(seg_fixed.label_set | seg_warped.label_set) - {0})
    report = EvalReport()
    for lbl in labels:
        report.per_class_dsc[lbl] = dice(seg_fixed, seg_warped, lbl)
        try:
            report.per_class_hd95[lbl] = hd95(seg_fixed, seg_warped, lbl, spacing)
        except EmptyMaskError:
            report.per_class_hd95[lbl] = float("nan")
    if report.per_class_dsc:
        report.mean_dsc = float(np.mean(list(report.per_class_dsc.values())))
    finite_hd = [v for v in report.per_class_hd95.values() if np.isfinite(v)]
    if finite_hd:
        report.mean_hd95 = float(np.mean(finite_hd))
    if displacement is not None:
        report.pct_neg_jdet = pct_neg_jdet(displacement)
        report.sdlog_jdet, report.sdlogj_excluded = sdlog_jdet(displacement)
    return report
