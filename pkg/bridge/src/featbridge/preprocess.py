"""ACDC slice preprocessing.

Walks the ACDC directory layout (patientXXX/Info.cfg naming the ED and ES
frames plus frame volumes and _gt segmentations), extracts the middle short-
axis slice of each phase, resamples in-plane to 1.8 mm x 1.8 mm, crops or
pads to 128 x 128 around the center (or a supplied per-patient bounding box)
and rescales intensities to [0, 1]. Outputs are float32 NPY files with JSON
sidecars and an images manifest.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .nifti import NiftiError, load
from .resize import center_crop_or_pad, resize_bilinear, resize_nearest

log = logging.getLogger("featbridge.preprocess")

TARGET_SPACING = 1.8   # mm, isotropic in-plane
TARGET_SIZE = 128


def _read_info(path: Path) -> dict:
    info = {}
    for line in path.read_text().splitlines():
        if ":" in line:
            key, _, val = line.partition(":")
            info[key.strip()] = val.strip()
    return info


def _middle_slice(volume: np.ndarray) -> np.ndarray:
    if volume.ndim == 4:      # cine volumes carry a time axis last
        volume = volume[..., 0]
    if volume.ndim != 3:
        raise NiftiError(f"expected a 3-d volume, got shape {volume.shape}")
    return volume[:, :, volume.shape[2] // 2]


def _resample_slice(sl: np.ndarray, zooms, nearest: bool) -> np.ndarray:
    sy, sx = float(zooms[0]), float(zooms[1])
    out_h = max(int(round(sl.shape[0] * sy / TARGET_SPACING)), 2)
    out_w = max(int(round(sl.shape[1] * sx / TARGET_SPACING)), 2)
    fn = resize_nearest if nearest else resize_bilinear
    return fn(sl, (out_h, out_w))


def _crop(sl: np.ndarray, bbox=None) -> np.ndarray:
    if bbox is not None:
        y0, x0, y1, x1 = bbox
        sl = sl[y0:y1, x0:x1]
    return center_crop_or_pad(sl, (TARGET_SIZE, TARGET_SIZE))


def _normalize(sl: np.ndarray) -> np.ndarray:
    lo, hi = float(sl.min()), float(sl.max())
    if hi == lo:
        return np.zeros_like(sl)
    return (sl - lo) / (hi - lo)


def _save_npy(path: Path, arr: np.ndarray, **meta) -> None:
    np.save(path, np.ascontiguousarray(arr, dtype=np.float32))
    if meta:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def _process_phase(
    patient_dir: Path, patient: str, frame: int, phase: str, out_dir: Path, bbox
) -> dict:
    stem = f"{patient}_frame{frame:02d}"
    vol_path = patient_dir / f"{stem}.nii.gz"
    if not vol_path.exists():
        vol_path = patient_dir / f"{stem}.nii"
    volume, zooms = load(vol_path)
    sl = _normalize(_crop(_resample_slice(_middle_slice(volume), zooms, False), bbox))
    img_name = f"{patient}_{phase}.npy"
    _save_npy(out_dir / img_name, sl,
              spacing=[TARGET_SPACING, TARGET_SPACING], source=str(vol_path))
    entry = {"id": f"{patient}_{phase}", "image_path": img_name}

    gt_path = patient_dir / f"{stem}_gt.nii.gz"
    if not gt_path.exists():
        gt_path = patient_dir / f"{stem}_gt.nii"
    if gt_path.exists():
        gt, gt_zooms = load(gt_path)
        seg = _crop(_resample_slice(_middle_slice(gt), gt_zooms, True), bbox)
        seg_name = f"{patient}_{phase}_gt.npy"
        _save_npy(out_dir / seg_name, np.rint(seg),
                  spacing=[TARGET_SPACING, TARGET_SPACING])
        entry["seg_path"] = seg_name
    return entry


def preprocess_acdc(
    raw_dir: str | Path, out_dir: str | Path, bbox_file: str | Path | None = None
) -> dict:
    """Process every patient; returns (and writes) the images manifest."""
    raw_dir = Path(raw_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bboxes = {}
    if bbox_file is not None:
        bboxes = json.loads(Path(bbox_file).read_text())
    entries = []
    skipped = []
    for patient_dir in sorted(p for p in raw_dir.iterdir() if p.is_dir()):
        patient = patient_dir.name
        info_path = patient_dir / "Info.cfg"
        if not info_path.exists():
            skipped.append({"patient": patient, "reason": "no Info.cfg"})
            log.warning("%s: no Info.cfg, skipped", patient)
            continue
        info = _read_info(info_path)
        try:
            frames = {"ED": int(info["ED"]), "ES": int(info["ES"])}
        except (KeyError, ValueError):
            skipped.append({"patient": patient, "reason": "ED/ES frames missing"})
            log.warning("%s: ED/ES frames missing from Info.cfg, skipped", patient)
            continue
        bbox = bboxes.get(patient)
        try:
            pair = [
                _process_phase(patient_dir, patient, frame, phase, out_dir, bbox)
                for phase, frame in frames.items()
            ]
        except (FileNotFoundError, NiftiError) as exc:
            skipped.append({"patient": patient, "reason": str(exc)})
            log.warning("%s: %s, skipped", patient, exc)
            continue
        entries.extend(pair)
    manifest = {
        "spacing_mm": TARGET_SPACING,
        "size": TARGET_SIZE,
        "entries": entries,
        "skipped": skipped,
    }
    (out_dir / "images.json").write_text(json.dumps(manifest, indent=2))
    return manifest
