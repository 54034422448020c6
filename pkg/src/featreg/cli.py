"""Command-line entry point.

Subcommands: register, sweep, alpha-sweep, benchmark, eval, synth, pca-viz,
commutativity. Run configuration lives in a TOML file (see README for the
schema); selected flags override file values. On failure a machine-readable
error JSON is printed and the exit code encodes the class of failure:
2 bad config, 3 I/O, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness
from .core import DisplacementField, Image2D, SegmentationMap
from .evaluation import evaluate_registration
from .features import (
    ExternalFeatureSet,
    commutativity_gap,
    filterbank_extractor,
    identity_extractor,
    pca_project,
)
from .npyio import TensorFormatError, load_sidecar, load_tensor, save_sidecar, save_tensor
from .objective import ObjectiveSpec
from .optim import NumericalAbort, OptimizerConfig, register
from .resampler import warp_image, warp_segmentation

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    def __init__(self, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.fieldname = fieldname


_SCHEMA = {
    "seed": int,
    "precision": str,
    "inputs": {
        "fixed": str, "moving": str, "seg_fixed": str, "seg_moving": str,
        "feature_manifest": str, "fixed_id": str, "moving_id": str,
    },
    "objective": {
        "variant": str, "intensity_metric": str, "feature_metric": str,
        "alpha": float, "lambda": float, "feature_mode": str,
        "extractor": str, "extractor_seed": int, "extractor_channels": int,
        "extractor_downsample": int, "feature_upscale": float,
        "cosine_flatten": bool,
    },
    "optimizer": {
        "method": str, "lr": float, "iterations": int,
        "beta1": float, "beta2": float, "eps": float, "seed": int,
    },
    "transform": {"lattice": list},
    "output": {"dir": str},
    "specs": None,  # benchmark only: nested objective tables, checked separately
}


def _check_keys(cfg: dict) -> None:
    for key, val in cfg.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}", key)
        sub = _SCHEMA[key]
        if isinstance(sub, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be a table", key)
            for k2 in val:
                if k2 not in sub:
                    raise ConfigError(f"unknown key {key}.{k2}", f"{key}.{k2}")
    if "specs" in cfg:
        for name, table in cfg["specs"].items():
            for k2 in table:
                if k2 not in _SCHEMA["objective"]:
                    raise ConfigError(f"unknown key specs.{name}.{k2}", f"specs.{name}.{k2}")


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", "config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}", "config") from exc
    _check_keys(cfg)
    return cfg


def _build_extractor(obj: dict):
    name = obj.get("extractor", "filterbank")
    if name == "identity":
        return identity_extractor()
    if name == "filterbank":
        return filterbank_extractor(
            seed=obj.get("extractor_seed", 0),
            channels=obj.get("extractor_channels", 4),
            downsample=obj.get("extractor_downsample", 2),
        )
    if name == "external":
        return None
    raise ConfigError(f"unknown extractor {name!r}", "objective.extractor")


def build_objective_spec(cfg: dict, obj: dict | None = None) -> ObjectiveSpec:
    obj = dict(obj if obj is not None else cfg.get("objective", {}))
    inputs = cfg.get("inputs", {})
    external = None
    external_ids = None
    if obj.get("extractor") == "external":
        manifest = inputs.get("feature_manifest")
        if not manifest:
            raise ConfigError("external extractor needs inputs.feature_manifest",
                              "inputs.feature_manifest")
        external = ExternalFeatureSet.from_manifest(manifest)
        if "fixed_id" not in inputs or "moving_id" not in inputs:
            raise ConfigError("external features need inputs.fixed_id and inputs.moving_id",
                              "inputs.fixed_id")
        external_ids = (inputs["fixed_id"], inputs["moving_id"])
        obj.setdefault("feature_mode", "encode-then-warp")
    spec = ObjectiveSpec(
        variant=obj.get("variant", "baseline"),
        intensity_metric=obj.get("intensity_metric", "mse"),
        feature_metric=obj.get("feature_metric"),
        extractor=_build_extractor(obj),
        external=external,
        external_ids=external_ids,
        alpha=float(obj.get("alpha", 0.0)),
        lam=float(obj.get("lambda", 120.0)),
        feature_mode=obj.get("feature_mode", "warp-then-encode"),
        feature_upscale=float(obj.get("feature_upscale", 1.0)),
        cosine_flatten=bool(obj.get("cosine_flatten", False)),
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), "objective") from exc
    return spec


def build_optimizer(cfg: dict) -> OptimizerConfig:
    o = cfg.get("optimizer", {})
    opt = OptimizerConfig(
        method=o.get("method", "adam"),
        lr=float(o.get("lr", 5e-4)),
        iterations=int(o.get("iterations", 1500)),
        beta1=float(o.get("beta1", 0.9)),
        beta2=float(o.get("beta2", 0.999)),
        eps=float(o.get("eps", 1e-8)),
        seed=int(o.get("seed", 0)),
    )
    try:
        opt.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), "optimizer") from exc
    return opt


def _out_dir(cfg: dict, override: str | None) -> Path:
    root = os.environ.get("FEATREG_OUT_ROOT", ".")
    d = override or cfg.get("output", {}).get("dir", "out")
    path = Path(d) if Path(d).is_absolute() else Path(root) / d
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_image(path: str, precision: str = "f64") -> Image2D:
    data = load_tensor(path).astype(np.float64)
    if precision == "f32":
        data = data.astype(np.float32).astype(np.float64)
    meta = load_sidecar(path) or {}
    return Image2D(
        data,
        tuple(meta.get("spacing", (1.0, 1.0))),
        tuple(meta.get("origin", (0.0, 0.0))),
    )


def _load_seg(path: str) -> SegmentationMap:
    return SegmentationMap(np.rint(load_tensor(path)).astype(np.int32))


def _require_input(cfg: dict, key: str) -> str:
    inputs = cfg.get("inputs", {})
    if key not in inputs:
        raise ConfigError(f"missing required input {key!r}", f"inputs.{key}")
    return inputs[key]


def _resolved_config(cfg: dict, spec: ObjectiveSpec, opt: OptimizerConfig, lattice) -> dict:
    return {
        "seed": cfg.get("seed", 0),
        "precision": cfg.get("precision", "f64"),
        "inputs": cfg.get("inputs", {}),
        "objective": {
            "variant": spec.variant,
            "intensity_metric": spec.intensity_metric,
            "feature_metric": spec.feature_metric,
            "extractor": getattr(spec.extractor, "name", None)
            or (spec.external.extractor if spec.external else None),
            "alpha": spec.alpha,
            "lambda": spec.lam,
            "feature_mode": spec.feature_mode,
            "feature_upscale": spec.feature_upscale,
        },
        "optimizer": asdict(opt),
        "transform": {"lattice": list(lattice)},
    }


# ---------------------------------------------------------------------------
# subcommands

def cmd_register(args) -> int:
    cfg = load_config(args.config)
    if args.iterations is not None:
        cfg.setdefault("optimizer", {})["iterations"] = args.iterations
    if args.alpha is not None:
        cfg.setdefault("objective", {})["alpha"] = args.alpha
    precision = cfg.get("precision", "f64")
    fixed = _load_image(_require_input(cfg, "fixed"), precision)
    moving = _load_image(_require_input(cfg, "moving"), precision)
    spec = build_objective_spec(cfg)
    opt = build_optimizer(cfg)
    lattice = tuple(cfg.get("transform", {}).get("lattice", [24, 24]))
    out = _out_dir(cfg, args.output)

    result = register(fixed, moving, spec, opt, lattice)
    save_tensor(result.displacement.data, out / "displacement.npy")
    save_sidecar(out / "displacement.npy", spacing=list(fixed.spacing))
    save_tensor(result.lattice.params, out / "lattice.npy")
    save_sidecar(out / "lattice.npy", grid_shape=list(result.lattice.grid_shape))
    payload = {
        "config": _resolved_config(cfg, spec, opt, lattice),
        "trajectory": result.trajectory_dict(),
        "elapsed_s": result.elapsed_s,
    }
    (out / "result.json").write_text(json.dumps(payload, indent=2))

    inputs = cfg.get("inputs", {})
    if "seg_fixed" in inputs and "seg_moving" in inputs:
        seg_f = _load_seg(inputs["seg_fixed"])
        seg_m = _load_seg(inputs["seg_moving"])
        warped = warp_segmentation(seg_m, result.displacement)
        report = evaluate_registration(
            seg_f, warped, result.displacement, spacing=fixed.spacing
        )
        (out / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    img = _load_image(args.image)
    extractor = _build_extractor(
        {"extractor": args.extractor, "extractor_seed": args.seed,
         "extractor_channels": args.channels, "extractor_downsample": args.downsample}
    )
    curve = harness.rigid_sweep(img, extractor, args.distance, args.kind)
    out = _out_dir({}, args.output)
    rows = harness.sweep_rows(curve)
    harness.write_csv(out / f"sweep_{args.kind}.csv", rows)
    if args.plot:
        _plot_curve(curve, out / f"sweep_{args.kind}.png")
    return 0


def _synthetic_pairs(args):
    return [
        harness.make_synthetic_pair(args.first_seed + i, args.size, args.max_disp)
        for i in range(args.pairs)
    ]


def cmd_alpha_sweep(args) -> int:
    cfg = load_config(args.config)
    template = build_objective_spec(cfg)
    opt = build_optimizer(cfg)
    lattice = tuple(cfg.get("transform", {}).get("lattice", [8, 8]))
    pairs = _synthetic_pairs(args)
    rows = harness.alpha_sweep(pairs, template, None, opt, lattice)
    out = _out_dir(cfg, args.output)
    harness.write_csv(out / "alpha_sweep.csv", rows)
    (out / "alpha_sweep.json").write_text(
        json.dumps({"config": _resolved_config(cfg, template, opt, lattice), "rows": rows},
                   indent=2)
    )
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    opt = build_optimizer(cfg)
    lattice = tuple(cfg.get("transform", {}).get("lattice", [8, 8]))
    spec_tables = cfg.get("specs") or {"default": cfg.get("objective", {})}
    specs = {name: build_objective_spec(cfg, table) for name, table in spec_tables.items()}
    pairs = _synthetic_pairs(args)
    dataset = [
        harness.BenchmarkCase(f"synth{p.seed}", p.fixed, p.moving, p.seg_fixed, p.seg_moving)
        for p in pairs
    ]
    if args.jobs > 1:
        # parallelize over specs x single-spec benchmarks; aggregation is order-stable
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                name: pool.submit(harness.run_benchmark, dataset, {name: spec}, opt, lattice)
                for name, spec in specs.items()
            }
            rows = [None]
            for name, fut in futures.items():
                res = fut.result()
                rows[0] = res[0]
                rows.append(res[1])
    else:
        rows = harness.run_benchmark(dataset, specs, opt, lattice)
    out = _out_dir(cfg, args.output)
    harness.write_csv(out / "benchmark.csv", rows)
    (out / "benchmark.json").write_text(
        json.dumps({"config": {k: v for k, v in cfg.items() if k != "specs"},
                    "rows": rows}, indent=2)
    )
    return 0


def cmd_eval(args) -> int:
    seg_f = _load_seg(args.seg_fixed)
    seg_m = _load_seg(args.seg_moving)
    disp = None
    spacing = tuple(args.spacing)
    if args.displacement:
        disp = DisplacementField(load_tensor(args.displacement).astype(np.float64), spacing)
        seg_m = warp_segmentation(seg_m, disp) if args.warp else seg_m
    report = evaluate_registration(seg_f, seg_m, disp, spacing=spacing)
    out = _out_dir({}, args.output)
    (out / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_synth(args) -> int:
    pair = harness.make_synthetic_pair(args.seed, args.size, args.max_disp)
    out = _out_dir({}, args.output)
    for name, arr, meta in [
        ("fixed.npy", pair.fixed.data, {"spacing": list(pair.fixed.spacing)}),
        ("moving.npy", pair.moving.data, {"spacing": list(pair.moving.spacing)}),
        ("disp_true.npy", pair.disp_true.data, {"spacing": list(pair.fixed.spacing)}),
        ("disp_target.npy", pair.disp_target.data, {"spacing": list(pair.fixed.spacing)}),
        ("seg_fixed.npy", pair.seg_fixed.data.astype(np.float64), {}),
        ("seg_moving.npy", pair.seg_moving.data.astype(np.float64), {}),
    ]:
        save_tensor(arr, out / name)
        if meta:
            save_sidecar(out / name, **meta)
    (out / "pair.json").write_text(
        json.dumps({"seed": args.seed, "size": args.size, "max_disp_px": args.max_disp},
                   indent=2)
    )
    return 0


def cmd_pca_viz(args) -> int:
    img = _load_image(args.image)
    extractor = _build_extractor(
        {"extractor": args.extractor, "extractor_seed": args.seed,
         "extractor_channels": args.channels, "extractor_downsample": args.downsample}
    )
    feats = extractor.extract(img)
    proj = pca_project(feats, args.k)
    out = _out_dir({}, args.output)
    save_tensor(proj.data, out / "pca_components.npy")
    save_sidecar(out / "pca_components.npy", source_tag=proj.source_tag)
    if args.plot:
        _plot_channels(proj.data, out / "pca_components.png")
    return 0


def cmd_commutativity(args) -> int:
    img = _load_image(args.image)
    extractor = filterbank_extractor(args.seed, args.channels, args.downsample)
    pair = harness.make_synthetic_pair(args.seed, max(img.shape), args.max_disp)
    u = DisplacementField(pair.disp_true.data[:, : img.shape[0], : img.shape[1]])
    gap_map, gap = commutativity_gap(img, u, extractor)
    out = _out_dir({}, args.output)
    save_tensor(gap_map.data, out / "gap_map.npy")
    (out / "commutativity.json").write_text(
        json.dumps({"mean_abs_gap": gap, "extractor": extractor.name,
                    "max_disp_px": args.max_disp}, indent=2)
    )
    if args.plot:
        _plot_channels(gap_map.data, out / "gap_map.png")
    return 0


def _plot_curve(curve, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.params, curve.values)
    ax.set_xlabel("radians" if curve.kind == "rotation" else "mm")
    ax.set_ylabel(curve.distance)
    ax.set_title(f"{curve.kind} sweep, {curve.extractor}")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def _plot_channels(data, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    c = data.shape[0]
    fig, axes = plt.subplots(1, c, figsize=(3 * c, 3))
    for i, ax in enumerate(np.atleast_1d(axes)):
        ax.imshow(data[i], cmap="viridis")
        ax.set_title(f"ch {i}")
        ax.axis("off")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featreg",
        description="Feature-guided iterative B-spline FFD registration toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="run one registration from a TOML config")
    p.add_argument("--config", required=True, help="TOML run config")
    p.add_argument("--output", help="output directory (overrides config)")
    p.add_argument("--iterations", type=int, help="override optimizer.iterations")
    p.add_argument("--alpha", type=float, help="override objective.alpha")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("sweep", help="rigid rotation/translation feature-distance sweep")
    p.add_argument("--kind", choices=["rotation", "translation"], required=True)
    p.add_argument("--image", required=True, help="NPY image path")
    p.add_argument("--extractor", default="filterbank", choices=["identity", "filterbank"])
    p.add_argument("--distance", default="feat-cos", choices=["feat-l1", "feat-cos"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--downsample", type=int, default=2)
    p.add_argument("--output", default="out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("alpha-sweep", help="alpha grid study on synthetic pairs")
    p.add_argument("--config", required=True, help="TOML template (combined objective)")
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--max-disp", type=float, default=5.0)
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=cmd_alpha_sweep)

    p = sub.add_parser("benchmark", help="benchmark table over objective specs")
    p.add_argument("--config", required=True)
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--max-disp", type=float, default=5.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("eval", help="Dice/HD95/Jacobian report for segmentations")
    p.add_argument("--seg-fixed", required=True)
    p.add_argument("--seg-moving", required=True)
    p.add_argument("--displacement")
    p.add_argument("--warp", action="store_true",
                   help="warp the moving segmentation before comparing")
    p.add_argument("--spacing", type=float, nargs=2, default=[1.0, 1.0])
    p.add_argument("--output", default="out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate one synthetic ground-truth pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--max-disp", type=float, default=5.0)
    p.add_argument("--output", default="out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pca-viz", help="principal-component feature visualization")
    p.add_argument("--image", required=True)
    p.add_argument("--extractor", default="filterbank", choices=["identity", "filterbank"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--downsample", type=int, default=2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--output", default="out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_pca_viz)

    p = sub.add_parser("commutativity", help="encode/warp commutativity probe")
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--downsample", type=int, default=2)
    p.add_argument("--max-disp", type=float, default=4.0)
    p.add_argument("--output", default="out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_commutativity)

    return parser


def _error_json(code: int, exc: Exception) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError) and exc.fieldname:
        payload["field"] = exc.fieldname
    return json.dumps(payload)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(_error_json(EXIT_CONFIG, exc))
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(_error_json(EXIT_NUMERICAL, exc))
        return EXIT_NUMERICAL
    except (OSError, TensorFormatError) as exc:
        print(_error_json(EXIT_IO, exc))
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(_error_json(EXIT_CONFIG, exc))
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
