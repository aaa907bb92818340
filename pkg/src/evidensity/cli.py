"""Command-line interface.

Subcommands wire the library into two workflows: producing fused evidential
outputs from a realization stack (``synth``/``gt``/``fuse``) and scoring
estimators across the scale pyramid (``eval``/``calibrate``/``report``).

Exit codes: 0 success, 2 invalid flags, 3 I/O failure, 4 contract or
numeric violation.  Every output file is written to a temporary sibling and
renamed into place, so a failing run never leaves partial outputs behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EvidensityError, ParameterError
from .evidential import FusionResult, fuse_ensemble
from .groundtruth import GaussianSpec, build_density_map
from .multiscale import ScaleSpec, enumerate_scales, evaluate, calibrate_w
from .synth import NoiseModel, generate_realizations, generate_scene
from .tensor_io import (
    _atomic_write_bytes,
    read_annotations,
    read_array,
    write_annotations,
    write_array,
)

logger = logging.getLogger(__name__)

LAYER_NAMES = ("betp", "bel", "pl", "theta", "conflict")

DEFAULTS = {
    "alpha": 0.8,
    "delta": 1.1,
    "t": 10,
    "stride_fraction": 0.25,
    "min_side": 16,
    "w": 1.0,
}

CSV_HEADER = ["estimator", "alpha", "scale_index", "side_px", "n_squares", "pep", "ri"]


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParameterError(f"config {path} must hold a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ParameterError(f"config {path} has unknown keys {sorted(unknown)}")
    for key, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"config key '{key}' must be numeric, got {value!r}")
    return raw


def _setting(flag_value, config: dict, key: str):
    """Explicit flag beats config file beats built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        value = config[key]
        return int(value) if key in ("t", "min_side") else float(value)
    return DEFAULTS[key]


def _parse_alpha_list(text: str) -> list[float]:
    try:
        alphas = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ParameterError(f"cannot parse alpha sweep {text!r}") from None
    if not alphas:
        raise ParameterError("alpha sweep is empty")
    for alpha in alphas:
        if not (0.0 <= alpha <= 1.0):
            raise ParameterError(f"alpha {alpha} outside [0, 1]")
    return alphas


def _scale_spec(args, config: dict) -> ScaleSpec:
    return ScaleSpec(
        delta=_setting(args.delta, config, "delta"),
        stride_fraction=_setting(args.stride_frac, config, "stride_fraction"),
        min_side=int(_setting(args.min_side, config, "min_side")),
        max_scales=args.max_scales,
    )


def _write_text_atomic(text: str, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(text.encode("utf-8"), path)


def _fusion_outputs(fusion: FusionResult) -> dict[str, np.ndarray]:
    return {
        "betp": fusion.betp,
        "bel": fusion.bel,
        "pl": fusion.pl,
        "theta": fusion.ignorance,
        "conflict": fusion.conflict,
    }


def cmd_gt(args) -> int:
    annotations = read_annotations(args.annotations)
    density = build_density_map(
        annotations, GaussianSpec(sigma0=args.sigma, truncation_radius=args.trunc)
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_array(density, args.out)
    logger.info("wrote %s (integral %.6f)", args.out, float(density.sum()))
    return 0


def cmd_fuse(args, config: dict) -> int:
    alphas = _parse_alpha_list(
        args.alpha if args.alpha is not None else str(_setting(None, config, "alpha"))
    )
    stack = read_array(args.stack)
    if stack.ndim != 3:
        raise ParameterError(f"--stack must hold a 3-D stack, got rank {stack.ndim}")
    staged: list[tuple[np.ndarray, Path]] = []
    for alpha in alphas:
        fusion = fuse_ensemble(stack, alpha)
        infix = "" if len(alphas) == 1 else f"alpha_{alpha:g}_"
        for name, layer in _fusion_outputs(fusion).items():
            staged.append((layer, Path(f"{args.out_prefix}{infix}{name}.npy")))
    # All layers computed before anything is written; each write is atomic.
    for layer, path in staged:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_array(layer, path)
    logger.info("wrote %d layer files under %s", len(staged), args.out_prefix)
    return 0


def _curve_rows(curve, estimator: str) -> list[list[str]]:
    return [
        [
            estimator,
            f"{record.alpha:g}",
            str(record.scale_index),
            str(record.side),
            str(record.n_squares),
            f"{record.pep:.9g}",
            f"{record.ri:.9g}",
        ]
        for record in curve.records
    ]


def cmd_eval(args, config: dict) -> int:
    bound_mode = args.betp is not None or args.bel is not None or args.pl is not None
    stack_mode = args.stack is not None
    if bound_mode == stack_mode:
        raise ParameterError("give either --betp/--bel/--pl or --stack, not both")
    if bound_mode and not (args.betp and args.bel and args.pl):
        raise ParameterError("--betp, --bel and --pl must be given together")
    gt = read_array(args.gt)
    if gt.ndim != 2:
        raise ParameterError(f"--gt must hold a 2-D map, got rank {gt.ndim}")
    spec = _scale_spec(args, config)
    w = _setting(args.w, config, "w")
    rows: list[list[str]] = []
    if bound_mode:
        fusions = [
            (
                float(args.alpha_label if args.alpha_label is not None
                      else _setting(None, config, "alpha")),
                FusionResult.from_bound_maps(
                    read_array(args.betp), read_array(args.bel), read_array(args.pl)
                ),
            )
        ]
    else:
        stack = read_array(args.stack)
        if stack.ndim != 3:
            raise ParameterError(f"--stack must hold a 3-D stack, got rank {stack.ndim}")
        alphas = _parse_alpha_list(
            args.alpha if args.alpha is not None else str(_setting(None, config, "alpha"))
        )
        fusions = [(alpha, fuse_ensemble(stack, alpha)) for alpha in alphas]
    for alpha, fusion in fusions:
        curve = evaluate(
            fusion,
            gt,
            spec,
            w=w,
            alpha_label=alpha,
            as_printed=args.pep_as_printed,
            threads=args.threads,
        )
        rows.extend(_curve_rows(curve, args.estimator))
        if args.print_mae:
            error = abs(w * float(fusion.betp.sum()) - float(gt.sum()))
            print(f"alpha={alpha:g} image_count_error={error:.6f}")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    _write_text_atomic(buffer.getvalue(), args.out)
    logger.info("wrote %s (%d records)", args.out, len(rows))
    return 0


def cmd_calibrate(args, config: dict) -> int:
    if not args.betp or not args.gt or len(args.betp) != len(args.gt):
        raise ParameterError("need matching --betp/--gt pairs (each flag repeatable)")
    spec = _scale_spec(args, config)
    betp_maps, gt_maps, region_lists = [], [], []
    for betp_path, gt_path in zip(args.betp, args.gt):
        betp, gt = read_array(betp_path), read_array(gt_path)
        betp_maps.append(betp)
        gt_maps.append(gt)
        region_lists.append(
            [region for scale in enumerate_scales(*betp.shape, spec) for region in scale]
        )
    w = calibrate_w(betp_maps, gt_maps, region_lists)
    print(f"{w:.12g}")
    if args.out:
        _write_text_atomic(json.dumps({"w": w}) + "\n", args.out)
    return 0


def cmd_synth_scene(args) -> int:
    annotations = generate_scene(
        width=args.width,
        height=args.height,
        n_heads=args.n,
        min_spacing=args.spacing,
        seed=args.seed,
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_annotations(annotations, args.out)
    logger.info("wrote %s (%d heads)", args.out, len(annotations.points))
    return 0


def cmd_synth_stack(args, config: dict) -> int:
    gt = read_array(args.gt)
    if gt.ndim != 2:
        raise ParameterError(f"--gt must hold a 2-D map, got rank {gt.ndim}")
    noise = NoiseModel(
        gaussian_sigma=args.noise_sigma,
        blur_sigma=args.blur_sigma,
        bias=args.bias,
        outlier_sources=args.outliers,
        seed=args.seed,
    )
    stack = generate_realizations(gt, int(_setting(args.t, config, "t")), noise)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_array(stack, args.out)
    logger.info("wrote %s with shape %s", args.out, stack.shape)
    return 0


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    points: list[dict] = []
    for path in args.curves:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != CSV_HEADER:
                raise ParameterError(
                    f"{path}: unexpected CSV columns {reader.fieldnames}"
                )
            for row in reader:
                points.append(
                    {
                        "estimator": row["estimator"],
                        "alpha": float(row["alpha"]),
                        "pep": float(row["pep"]),
                        "ri": float(row["ri"]),
                    }
                )
    if not points:
        raise ParameterError("no records found in the given curve files")
    estimators = sorted({p["estimator"] for p in points})
    alphas = sorted({p["alpha"] for p in points})
    colors = plt.get_cmap("tab10")
    markers = ["o", "s", "^", "D", "v", "P", "X", "*"]
    figure, axes = plt.subplots(figsize=(7, 5))
    for e_index, estimator in enumerate(estimators):
        for a_index, alpha in enumerate(alphas):
            xs = [p["pep"] for p in points
                  if p["estimator"] == estimator and p["alpha"] == alpha]
            ys = [p["ri"] for p in points
                  if p["estimator"] == estimator and p["alpha"] == alpha]
            if xs:
                axes.scatter(
                    xs,
                    ys,
                    color=colors(e_index % 10),
                    marker=markers[a_index % len(markers)],
                    label=f"{estimator} (alpha={alpha:g})",
                )
    axes.set_xlabel("prediction error probability")
    axes.set_ylabel("relative imprecision")
    axes.set_title("Relative imprecision vs prediction error probability")
    axes.legend(fontsize=8)
    buffer = io.BytesIO()
    figure.savefig(buffer, format="svg")
    plt.close(figure)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(buffer.getvalue(), args.out)
    logger.info("wrote %s (%d points)", args.out, len(points))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evidensity",
        description="Evidential fusion and multiscale evaluation of density estimators.",
    )
    parser.add_argument("--version", action="version", version=f"evidensity {__version__}")
    parser.add_argument("--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument(
            "--config",
            help="JSON file overriding built-in defaults "
            "(keys: alpha, delta, t, stride_fraction, min_side, w)",
        )

    def add_scale_flags(p):
        p.add_argument("--delta", type=float, default=None,
                       help="scale factor dividing the square side per scale (> 1, default 1.1)")
        p.add_argument("--stride-frac", type=float, default=None,
                       help="grid stride as a fraction of the square side (default 0.25)")
        p.add_argument("--min-side", type=int, default=None,
                       help="stop the pyramid below this side length in px (default 16)")
        p.add_argument("--max-scales", type=int, default=None,
                       help="cap on the number of scales (default: until min-side)")

    p_gt = sub.add_parser("gt", help="render a ground-truth density map from annotations")
    p_gt.add_argument("--annotations", required=True, help="head-annotation JSON file")
    p_gt.add_argument("--sigma", type=float, default=3.0,
                      help="base Gaussian bandwidth in px before perspective scaling")
    p_gt.add_argument("--trunc", type=float, default=4.0,
                      help="kernel truncation radius in multiples of sigma (>= 3)")
    p_gt.add_argument("--out", required=True, help="output NPY path")

    p_fuse = sub.add_parser("fuse", help="fuse a realization stack into evidential layers")
    add_config(p_fuse)
    p_fuse.add_argument("--stack", required=True, help="NPY stack of shape (T, H, W)")
    p_fuse.add_argument("--alpha", default=None,
                        help="discount strength in [0, 1]; comma-separated values sweep "
                        "(default 0.8); lower alpha moves more mass to ignorance")
    p_fuse.add_argument("--out-prefix", required=True,
                        help="prefix for betp/bel/pl/theta/conflict .npy outputs")

    p_eval = sub.add_parser("eval", help="PEP/RI across the scale pyramid")
    add_config(p_eval)
    p_eval.add_argument("--betp", help="BetP map NPY (with --bel/--pl)")
    p_eval.add_argument("--bel", help="Bel map NPY")
    p_eval.add_argument("--pl", help="Pl map NPY")
    p_eval.add_argument("--stack", help="fuse this stack internally instead of reading maps")
    p_eval.add_argument("--alpha", default=None,
                        help="comma-separated discount sweep for --stack mode (default 0.8)")
    p_eval.add_argument("--alpha-label", type=float, default=None,
                        help="alpha recorded in the CSV for --betp mode (default 0.8)")
    p_eval.add_argument("--gt", required=True, help="ground-truth density NPY")
    add_scale_flags(p_eval)
    p_eval.add_argument("--w", type=float, default=None,
                        help="count calibration factor (> 0, default 1; "
                        "see the calibrate subcommand)")
    p_eval.add_argument("--estimator", default="estimator",
                        help="label written to the CSV's estimator column")
    p_eval.add_argument("--pep-as-printed", action="store_true",
                        help="report the inside-interval fraction instead of the error rate")
    p_eval.add_argument("--threads", type=int, default=1,
                        help="worker threads across scales (output is thread-count invariant)")
    p_eval.add_argument("--print-mae", action="store_true",
                        help="also print the image-level absolute count error")
    p_eval.add_argument("--out", required=True, help="output CSV path")

    p_cal = sub.add_parser("calibrate", help="least-squares count factor w from map pairs")
    add_config(p_cal)
    p_cal.add_argument("--betp", action="append", help="BetP map NPY (repeatable)")
    p_cal.add_argument("--gt", action="append", help="matching ground-truth NPY (repeatable)")
    add_scale_flags(p_cal)
    p_cal.add_argument("--out", help="optional JSON output {\"w\": value}")

    p_synth = sub.add_parser("synth", help="deterministic synthetic benchmark data")
    synth_sub = p_synth.add_subparsers(dest="synth_command", required=True)

    p_scene = synth_sub.add_parser("scene", help="random head annotations with min spacing")
    p_scene.add_argument("--n", type=int, required=True, help="number of heads")
    p_scene.add_argument("--width", type=int, default=256)
    p_scene.add_argument("--height", type=int, default=256)
    p_scene.add_argument("--spacing", type=float, default=8.0,
                         help="minimum pairwise distance in px")
    p_scene.add_argument("--seed", type=int, default=0)
    p_scene.add_argument("--out", required=True, help="output annotation JSON path")

    p_stack = synth_sub.add_parser("stack", help="noisy realization stack from a density map")
    add_config(p_stack)
    p_stack.add_argument("--gt", required=True, help="ground-truth density NPY")
    p_stack.add_argument("--t", type=int, default=None, help="ensemble size (default 10)")
    p_stack.add_argument("--noise-sigma", type=float, default=0.05,
                         help="additive per-pixel Gaussian noise sigma")
    p_stack.add_argument("--blur-sigma", type=float, default=0.0,
                         help="Gaussian blur applied before noise, in px")
    p_stack.add_argument("--bias", type=float, default=0.0,
                         help="multiplicative bias (1 + bias)")
    p_stack.add_argument("--outliers", type=int, default=0,
                         help="trailing sources replaced by corrupted maps")
    p_stack.add_argument("--seed", type=int, default=0)
    p_stack.add_argument("--out", required=True, help="output NPY stack path")

    p_report = sub.add_parser("report", help="merge curve CSVs into an RI-vs-PEP SVG scatter")
    p_report.add_argument("curves", nargs="+", help="curve.csv files to merge")
    p_report.add_argument("--out", required=True, help="output SVG path")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    logging.getLogger("evidensity").setLevel(
        logging.DEBUG if args.verbose else logging.INFO
    )
    try:
        config = _load_config(getattr(args, "config", None))
        if args.command == "gt":
            return cmd_gt(args)
        if args.command == "fuse":
            return cmd_fuse(args, config)
        if args.command == "eval":
            return cmd_eval(args, config)
        if args.command == "calibrate":
            return cmd_calibrate(args, config)
        if args.command == "synth":
            if args.synth_command == "scene":
                return cmd_synth_scene(args)
            return cmd_synth_stack(args, config)
        if args.command == "report":
            return cmd_report(args)
        raise ParameterError(f"unknown command {args.command!r}")
    except EvidensityError as exc:
        print(f"evidensity: error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"evidensity: i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
