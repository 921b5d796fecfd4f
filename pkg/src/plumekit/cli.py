"""Command-line pipeline: one executable, one subcommand per stage.

Exit codes are part of the contract: 0 success, 1 usage error (unknown
subcommand or flags, shown with usage text on stderr), 2 data or invariant
error (missing band, malformed file, degenerate fit, ...).

Every successful run writes a RunRecord JSON next to its outputs (inside
the output directory, or as ``<name>.run.json`` beside an output file)
capturing the subcommand, resolved configuration, paths, seed, tool
version and duration: everything needed to repeat the run bit-exactly.
The record itself carries a wall-clock duration and is the one output
that legitimately differs between reruns.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, dataset, evalmetrics, labeling, synth
from .detect import DetectorConfig, detect_plumes
from .enhance import FeatureStack
from .estimators import FeatureEnhancer
from .raster import Field, Mask, Scene, export_image, read_brf, write_brf
from .validation import PlumekitError


class _UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems instead of exiting."""

    def error(self, message):
        raise _UsageError(self, message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="plumekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene + truth mask")
    p.add_argument("--config", required=True, help="SceneConfig JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("enhance", help="compute the [V,S,V] feature stack")
    p.add_argument("--scene", required=True, help="input scene BRF")
    p.add_argument("--out", required=True, help="output stack BRF")
    p.add_argument("--predictors", default="B11", help="comma-separated predictor bands")
    p.add_argument("--p-lo", type=float, default=2.5, help="background percentile low")
    p.add_argument("--p-hi", type=float, default=97.5, help="background percentile high")
    p.add_argument("--no-zscore", action="store_true", help="skip z-score normalization")
    p.add_argument("--model-out", default=None, help="write the regression model JSON here")

    p = sub.add_parser("label", help="threshold a ratio field into a labeled mask")
    p.add_argument("--in", dest="infile", required=True, help="input ratio field BRF")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--direction", choices=["below", "above"], default="below")
    p.add_argument("--out-mask", required=True, help="output mask BRF")
    p.add_argument("--out-contours", default=None, help="output contours JSON")
    p.add_argument("--vents", default=None, help="vent locations JSON for source labels")
    p.add_argument("--override-mask", default=None, help="operator-edited mask replacing the threshold step")
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)

    p = sub.add_parser("dataset", help="dataset operations")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="tile + augment + split into a dataset dir")
    b.add_argument("--config", required=True, help="dataset build config JSON")
    b.add_argument("--out", required=True, help="output dataset directory")
    b.add_argument("--seed", type=int, default=None, help="override the config seed")
    b.add_argument("--jobs", type=int, default=1, help="parallel scene tiling jobs")

    p = sub.add_parser("detect", help="baseline robust-threshold detector")
    p.add_argument("--in", dest="infile", required=True, help="input stack BRF")
    p.add_argument("--out", required=True, help="output prediction mask BRF")
    p.add_argument("--k", type=float, default=4.0, help="anomaly depth in robust stds")
    p.add_argument("--channel", choices=["V", "S", "min"], default="S")
    p.add_argument("--min-area", type=int, default=1)
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)

    p = sub.add_parser("eval", help="score prediction masks against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="directory of <sample_id>.brf masks")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--split", choices=["val", "train", "all"], default="val")

    p = sub.add_parser("diffmap", help="render a prediction/truth difference map")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="output PPM image")
    p.add_argument("--out-codes", default=None, help="also write the code mask BRF")

    return parser


# ---------------------------------------------------------------------------
# Subcommand implementations; each returns (outputs, resolved_config, inputs, seed)
# ---------------------------------------------------------------------------


def _cmd_synth(args):
    cfg = synth.SceneConfig.from_json(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if cfg.noise.seed is None:
        cfg = replace(cfg, noise=replace(cfg.noise, seed=cfg.seed + 1))
    scene, mask = synth.generate_scene(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_brf(scene, out / "scene.brf")
    write_brf(mask, out / "mask.brf")
    echo = cfg.to_json()
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True))
    return [out], echo, [args.config], cfg.seed


def _cmd_enhance(args):
    obj = read_brf(args.scene)
    if not isinstance(obj, Scene):
        raise PlumekitError(f"{args.scene} is not a scene file")
    predictors = tuple(b for b in args.predictors.split(",") if b)
    enhancer = FeatureEnhancer(
        predictor_bands=predictors,
        p_lo=args.p_lo,
        p_hi=args.p_hi,
        normalize=not args.no_zscore,
    )
    stack = enhancer.fit(obj).transform(obj)
    write_brf(stack, args.out)
    outputs = [Path(args.out)]
    if args.model_out:
        Path(args.model_out).write_text(
            json.dumps(enhancer.regression_.to_json(), indent=2, sort_keys=True)
        )
        outputs.append(Path(args.model_out))
    config = {
        "predictors": list(predictors),
        "p_lo": args.p_lo,
        "p_hi": args.p_hi,
        "zscore": not args.no_zscore,
        "scale_c": enhancer.scale_.c,
        "sanchez_c": enhancer.sanchez_scale_.c,
    }
    return outputs, config, [args.scene], None


def _cmd_label(args):
    obj = read_brf(args.infile)
    if not isinstance(obj, Field):
        raise PlumekitError(f"{args.infile} is not a single-channel field")
    if args.override_mask:
        mask = read_brf(args.override_mask)
        if not isinstance(mask, Mask):
            raise PlumekitError(f"{args.override_mask} is not a mask")
    else:
        mask = labeling.mask_from_threshold(obj, args.threshold, args.direction)

    components = labeling.connected_components(mask, args.connectivity)
    inputs = [args.infile]
    if args.vents:
        vents_spec = json.loads(Path(args.vents).read_text())
        vents = [(v["name"], (float(v["xy"][0]), float(v["xy"][1]))) for v in vents_spec]
        out_mask = labeling.assign_sources(components, vents, mask.shape)
        inputs.append(args.vents)
    else:
        out_mask = mask
    write_brf(out_mask, args.out_mask)
    outputs = [Path(args.out_mask)]
    if args.out_contours:
        geo = labeling.contours_to_geojson(labeling.extract_contours(mask))
        Path(args.out_contours).write_text(json.dumps(geo, indent=2, sort_keys=True))
        outputs.append(Path(args.out_contours))
    config = {
        "threshold": args.threshold,
        "direction": args.direction,
        "connectivity": args.connectivity,
        "override_mask": args.override_mask,
        "n_components": len(components),
    }
    if args.override_mask:
        inputs.append(args.override_mask)
    return outputs, config, inputs, None


def _cmd_dataset_build(args):
    cfg = dataset.DatasetBuildConfig.from_json(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    base_dir = Path(args.config).parent
    dataset.build_dataset(cfg, args.out, base_dir=base_dir, jobs=args.jobs)
    return [Path(args.out)], cfg.to_json(), [args.config], cfg.seed


def _cmd_detect(args):
    obj = read_brf(args.infile)
    if not isinstance(obj, FeatureStack):
        raise PlumekitError(f"{args.infile} is not a feature stack")
    cfg = DetectorConfig(
        k_sigma=args.k,
        channel=args.channel,
        min_area_px=args.min_area,
        connectivity=args.connectivity,
    )
    pred = detect_plumes(obj, cfg)
    write_brf(pred, args.out)
    config = {
        "k_sigma": cfg.k_sigma,
        "channel": cfg.channel,
        "min_area_px": cfg.min_area_px,
        "connectivity": cfg.connectivity,
    }
    return [Path(args.out)], config, [args.infile], None


def _cmd_eval(args):
    manifest = dataset.Manifest.load(args.manifest)
    report = evalmetrics.evaluate_manifest(
        manifest, args.pred, base_dir=Path(args.manifest).parent, split=args.split
    )
    out = Path(args.out)
    out.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
    txt = out.with_suffix(".txt")
    txt.write_text(report.to_text() + "\n")
    config = {"split": args.split, "count": report.count}
    return [out, txt], config, [args.manifest, args.pred], None


def _cmd_diffmap(args):
    pred = read_brf(args.pred)
    gt = read_brf(args.gt)
    if not isinstance(pred, Mask) or not isinstance(gt, Mask):
        raise PlumekitError("diffmap needs two mask files")
    codes = evalmetrics.difference_map(pred, gt)
    export_image(codes, args.out, colormap="diffmap")
    outputs = [Path(args.out)]
    if args.out_codes:
        write_brf(codes, args.out_codes)
        outputs.append(Path(args.out_codes))
    return outputs, {}, [args.pred, args.gt], None


_DISPATCH = {
    "synth": _cmd_synth,
    "enhance": _cmd_enhance,
    "label": _cmd_label,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "diffmap": _cmd_diffmap,
}


def _record_path(first_output: Path) -> Path:
    if first_output.is_dir():
        return first_output / "run_record.json"
    name = first_output.name
    stem = name[: -len(first_output.suffix)] if first_output.suffix else name
    return first_output.with_name(stem + ".run.json")


def _write_run_record(argv, args, outputs, config, inputs, seed, duration):
    record = {
        "subcommand": args.subcommand,
        "argv": list(argv),
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "duration_s": duration,
    }
    path = _record_path(Path(outputs[0]))
    path.write_text(json.dumps(record, indent=2, sort_keys=True))


def run(argv) -> int:
    """Execute one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"plumekit: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --version / --help
        return int(exc.code or 0)

    if args.subcommand == "dataset":
        handler = _cmd_dataset_build
    else:
        handler = _DISPATCH[args.subcommand]

    start = time.perf_counter()
    try:
        outputs, config, inputs, seed = handler(args)
    except PlumekitError as exc:
        print(f"plumekit {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"plumekit {args.subcommand}: I/O error: {exc}", file=sys.stderr)
        return 2
    duration = time.perf_counter() - start
    _write_run_record(argv, args, outputs, config, inputs, seed, duration)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
