"""featbridge command line: `preprocess` and `export` subcommands."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoders import get_encoder
from .export import export_features
from .preprocess import preprocess_acdc


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="featbridge",
        description="ACDC preprocessing and frozen-encoder feature export",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="extract 128x128 middle slices at 1.8 mm")
    p.add_argument("--raw-dir", required=True, help="ACDC root directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bbox-file", help="per-patient crop boxes (JSON)")

    p = sub.add_parser("export", help="export encoder features for a manifest")
    p.add_argument("--images", required=True, help="images.json from preprocess")
    p.add_argument("--encoder", required=True,
                   help="dinov2_vitb14_reg | sam_vit_b_01ec64 | medsam_vit_b | dummy")
    p.add_argument("--checkpoint", help="model weights path (real encoders)")
    p.add_argument("--upscale", type=float, default=1.0)
    p.add_argument("--out-dir")

    args = parser.parse_args(argv)
    if args.command == "preprocess":
        manifest = preprocess_acdc(args.raw_dir, args.out_dir, args.bbox_file)
        print(f"{len(manifest['entries'])} slices, "
              f"{len(manifest['skipped'])} patients skipped")
    else:
        encoder = get_encoder(args.encoder, args.checkpoint)
        export = export_features(args.images, encoder, args.upscale, args.out_dir)
        print(f"exported {len(export['entries'])} feature maps "
              f"(C={export['channels']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
