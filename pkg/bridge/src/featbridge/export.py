"""Feature export: run a frozen encoder over preprocessed slices.

For every entry of an images manifest: load the slice, optionally upscale,
replicate to three channels, encode, resample the feature grid to 64 x 64
and save a C x 64 x 64 float32 NPY. The resulting manifest is the contract
consumed by the registration toolkit's external-feature loader.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoders import Encoder
from .resize import resize_bilinear

FEATURE_GRID = 64


def export_features(
    image_manifest: str | Path,
    encoder: Encoder,
    upscale: float = 1.0,
    out_dir: str | Path | None = None,
) -> dict:
    """Export features for every manifest entry; returns the export manifest."""
    if upscale <= 0:
        raise ValueError(f"upscale must be positive, got {upscale}")
    manifest_path = Path(image_manifest)
    base = manifest_path.parent
    images = json.loads(manifest_path.read_text())
    out_dir = Path(out_dir) if out_dir is not None else base
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for entry in images["entries"]:
        img_path = base / entry["image_path"]
        img = np.load(img_path).astype(np.float64)
        if img.ndim != 2:
            raise ValueError(f"{img_path}: expected a 2-d slice, got {img.shape}")
        if upscale != 1.0:
            h2 = int(round(img.shape[0] * upscale))
            w2 = int(round(img.shape[1] * upscale))
            img = resize_bilinear(img, (h2, w2))
        img3 = np.repeat(img[None], 3, axis=0)
        feats = encoder(img3)
        if feats.ndim != 3:
            raise ValueError(
                f"encoder {encoder.name!r} returned shape {feats.shape}, "
                f"expected (C, Hf, Wf)"
            )
        if feats.shape[0] != encoder.channels:
            raise ValueError(
                f"encoder {encoder.name!r} returned {feats.shape[0]} channels, "
                f"declared {encoder.channels}"
            )
        if feats.shape[1:] != (FEATURE_GRID, FEATURE_GRID):
            feats = resize_bilinear(feats, (FEATURE_GRID, FEATURE_GRID))
        feat_name = f"{entry['id']}_{encoder.name}.npy"
        np.save(out_dir / feat_name, np.ascontiguousarray(feats, dtype=np.float32))
        entries.append(
            {"id": entry["id"], "image_path": entry["image_path"],
             "feature_path": feat_name}
        )

    export = {
        "extractor": encoder.name,
        "checkpoint": encoder.checkpoint,
        "channels": encoder.channels,
        "upscale": upscale,
        "feature_grid": FEATURE_GRID,
        "entries": entries,
    }
    out_path = out_dir / f"features_{encoder.name}.json"
    out_path.write_text(json.dumps(export, indent=2))
    return export
