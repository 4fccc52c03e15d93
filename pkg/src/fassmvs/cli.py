"""Command-line entry point: ``fassmvs estimate | eval | render``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, DegenerateGeometryError, InvalidInputError
from .evaluation import evaluate
from .io import PoseEntry, load_views, read_pfm, read_pose_file, save_image, write_pfm, write_pose_file
from .matching import CostFunctionSpec
from .pipeline import PipelineConfig, estimate_bundle, select_bundles
from .postfilter import ConsistencyWindow, apply_mask, dog_mask, geometric_filter, window_bounds
from .sgm import SgmConfig
from .synthetic import fronto_parallel_scene, render_scene, slanted_scene, two_plane_scene
from .viz import colorize

logger = logging.getLogger("fassmvs")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2
THREADS_ENV = "FASSMVS_THREADS"
SGM_VARIANTS = {"pi": "plane", "pi-sn": "surface-normal", "pi-pg": "path-gradient"}
MATCHERS = ("census5x5", "census9x7", "ncc5x5", "ncc9x9")
SCENES = {"fronto": fronto_parallel_scene, "slanted": slanted_scene, "two-plane": two_plane_scene}


def _odd_bundle(text: str) -> int:
    n = int(text)
    if n < 3 or n % 2 == 0:
        raise argparse.ArgumentTypeError(f"bundle size must be odd and at least 3, got {n}")
    return n


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _depth_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"depth range needs 0 < MIN < MAX, got {text!r}")
    return lo, hi


def _vector3(text: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}") from None
    if len(values) != 3 or not any(values):
        raise argparse.ArgumentTypeError(f"expected a non-zero X,Y,Z vector, got {text!r}")
    return values


def _penalty2(text: str) -> str | float:
    if text == "adaptive":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'adaptive' or a number, got {text!r}") from None


def _thetas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated thresholds, got {text!r}") from None
    if any(v <= 1 for v in values):
        raise argparse.ArgumentTypeError("thresholds must exceed 1")
    return values


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fassmvs", description="Multi-view depth and normal estimation by plane sweeping.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate depth, normal and confidence maps for a pose file")
    est.add_argument("--poses", type=Path, required=True)
    est.add_argument("--out", type=Path, required=True)
    est.add_argument("--depth-range", type=_depth_range, required=True, metavar="MIN:MAX")
    est.add_argument("--bundle-size", type=_odd_bundle, default=5)
    est.add_argument("--bundle-mode", choices=("overlap", "disjoint"), default="overlap")
    est.add_argument("--pyramid-levels", type=_positive_int, default=3)
    est.add_argument("--matcher", choices=MATCHERS, default="ncc5x5")
    est.add_argument("--sgm", choices=tuple(SGM_VARIANTS), default="pi")
    est.add_argument("--paths", type=int, choices=(8, 4), default=8)
    est.add_argument("--p1", type=float, default=100.0)
    est.add_argument("--p2", type=_penalty2, default="adaptive")
    est.add_argument("--plane-normal", type=_vector3, default=(0.0, 0.0, -1.0), metavar="X,Y,Z")
    est.add_argument("--max-planes", type=_positive_int, default=256)
    est.add_argument("--filter", choices=("none", "dog", "geom", "both"), default="none")
    est.add_argument("--geom-window", type=_positive_int, default=5)
    est.add_argument("--eta-r", type=float, default=10.0, help="reprojection error bound in pixels")
    est.add_argument("--eta-h", type=_positive_int, default=3, help="consistent neighbours required")
    est.add_argument("--viz", action="store_true", help="also write colourised PNGs")
    est.add_argument("--threads", type=_positive_int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")

    ev = sub.add_parser("eval", help="score a depth map against ground truth")
    ev.add_argument("--est", type=Path, required=True)
    ev.add_argument("--gt", type=Path, required=True)
    ev.add_argument("--conf", type=Path)
    ev.add_argument("--theta", type=_thetas, default=[1.05, 1.25])
    ev.add_argument("--json", action="store_true", help="print JSON instead of key=value lines")

    ren = sub.add_parser("render", help="write a synthetic scene with ground truth")
    ren.add_argument("--out", type=Path, required=True)
    ren.add_argument("--scene", choices=tuple(SCENES), default="fronto")
    ren.add_argument("--width", type=_positive_int, default=320)
    ren.add_argument("--height", type=_positive_int, default=240)
    ren.add_argument("--views", type=_odd_bundle, default=5)
    ren.add_argument("--seed", type=int, default=None)
    return parser


def _config_from_args(args: argparse.Namespace, threads: int) -> PipelineConfig:
    sgm = SgmConfig(variant=SGM_VARIANTS[args.sgm], paths=args.paths, phi1=args.p1, phi2=args.p2)
    return PipelineConfig(
        depth_range=args.depth_range,
        bundle_size=args.bundle_size,
        pyramid_levels=args.pyramid_levels,
        sweep_normal=args.plane_normal,
        max_planes=args.max_planes,
        sgm=sgm,
        matcher=CostFunctionSpec.parse(args.matcher),
        threads=threads,
    )


def _settings(args: argparse.Namespace) -> dict:
    # thread count is deliberately absent: it never changes the output
    return {
        "depth_range": list(args.depth_range),
        "bundle_size": args.bundle_size,
        "bundle_mode": args.bundle_mode,
        "pyramid_levels": args.pyramid_levels,
        "matcher": args.matcher,
        "sgm": args.sgm,
        "paths": args.paths,
        "p1": args.p1,
        "p2": args.p2,
        "plane_normal": list(args.plane_normal),
        "max_planes": args.max_planes,
        "filter": args.filter,
        "geom_window": args.geom_window,
        "eta_r": args.eta_r,
        "eta_h": args.eta_h,
    }


def run_estimate(args: argparse.Namespace) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    config = _config_from_args(args, threads)
    entries = read_pose_file(args.poses)
    views = load_views(entries)
    bundles = select_bundles(len(views), config.bundle_size, args.bundle_mode)
    if not bundles:
        raise InvalidInputError(f"{len(views)} views cannot fill a bundle of {config.bundle_size}")
    use_geom = args.filter in ("geom", "both")
    if use_geom and min(args.geom_window, len(bundles)) < args.eta_h + 1:
        raise ConfigurationError(
            f"geometric filter needs at least {args.eta_h + 1} reference frames in its window, "
            f"have {min(args.geom_window, len(bundles))}"
        )
    args.out.mkdir(parents=True, exist_ok=True)

    results = []
    for indices in bundles:
        bundle = [views[i] for i in indices]
        ref = indices[len(indices) // 2]
        logger.info("bundle %s -> reference %s", indices, entries[ref].image.name)
        results.append((ref, estimate_bundle(bundle, config)))

    keep_geom = [None] * len(results)
    if use_geom:
        cameras = [views[ref].camera for ref, _ in results]
        depths = [est.depth for _, est in results]
        for k, (start, stop, centre) in enumerate(window_bounds(len(results), args.geom_window)):
            window = ConsistencyWindow(depths[start:stop], cameras[start:stop], centre - start)
            keep_geom[k] = geometric_filter(window, eta_r=args.eta_r, eta_h=args.eta_h)

    frames = []
    for (ref, est), geom in zip(results, keep_geom):
        keep = np.ones(est.depth.shape, dtype=bool)
        if args.filter in ("dog", "both"):
            keep &= dog_mask(views[ref].image)
        if geom is not None:
            keep &= geom
        depth, normals, conf = apply_mask(est.depth, est.normals, est.confidence, keep)
        stem = args.out / entries[ref].image.stem
        outputs = {
            "depth": f"{stem.name}_depth.pfm",
            "normal": f"{stem.name}_normal.pfm",
            "confidence": f"{stem.name}_conf.pfm",
        }
        write_pfm(args.out / outputs["depth"], depth)
        write_pfm(args.out / outputs["normal"], normals)
        write_pfm(args.out / outputs["confidence"], conf)
        if args.viz:
            for kind, values in (("depth", depth), ("normal", normals), ("confidence", conf)):
                name = f"{stem.name}_{'conf' if kind == 'confidence' else kind}.png"
                save_image(args.out / name, colorize(values, kind, args.depth_range))
                outputs[f"{kind}_png"] = name
        frames.append(
            {
                "reference": str(entries[ref].image.name),
                "bundle": [entries[i].image.name for i in bundles[len(frames)]],
                "valid_fraction": float((depth > 0).mean()),
                "levels": [
                    {"level": s.level, "width": s.shape[1], "height": s.shape[0], "planes": s.planes, "max_slots": s.max_slots}
                    for s in est.levels
                ],
                "outputs": outputs,
            }
        )
    report = {"settings": _settings(args), "frames": frames}
    (args.out / "run_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def run_eval(args: argparse.Namespace) -> int:
    est = read_pfm(args.est).astype(np.float64)
    gt = read_pfm(args.gt).astype(np.float64)
    if est.shape != gt.shape:
        raise InvalidInputError(f"estimate is {est.shape} but ground truth is {gt.shape}")
    conf = read_pfm(args.conf).astype(np.float64) if args.conf else None
    report = evaluate(est, gt, thetas=args.theta, conf=conf)
    sys.stdout.write(report.to_json() + "\n" if args.json else report.to_text())
    return EXIT_OK


def run_render(args: argparse.Namespace) -> int:
    factory = SCENES[args.scene]
    kwargs = {"width": args.width, "height": args.height, "n_views": args.views}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    rendered = render_scene(factory(**kwargs))
    args.out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, view in enumerate(rendered.views):
        name = f"view{k:03d}"
        save_image(args.out / f"{name}.png", view.image)
        write_pfm(args.out / f"{name}_gt_depth.pfm", rendered.depths[k])
        write_pfm(args.out / f"{name}_gt_normal.pfm", rendered.normals[k])
        entries.append(PoseEntry(args.out / f"{name}.png", view.intrinsics.matrix, view.pose))
    valid = np.concatenate([d[d > 0] for d in rendered.depths])
    comment = f"scene {args.scene}; ground-truth depth spans {valid.min():.6g}..{valid.max():.6g}"
    write_pose_file(args.out / "poses.txt", entries, comment=comment)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    handlers = {"estimate": run_estimate, "eval": run_eval, "render": run_render}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"fassmvs: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInputError, DegenerateGeometryError) as exc:
        print(f"fassmvs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"fassmvs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
