"""``rainsim`` command line: simulate, stats, distill, eval.

Exit codes: 0 success, 1 validation/domain error, 2 I/O or argument error.
Log level comes from ``RAINSIM_LOG`` (error, warn, info, debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import gap_report, precision_recall
from .distill import DEFAULT_WEIGHTS, InstancePair, LossWeights, PredictionSet, loss_report
from .errors import FormatError, RainSimError
from .pointcloud import LidarConfig, PointCloud, read_pointcloud, write_pointcloud
from .scene import AtmosphereParams, simulate_rain
from .splash import SplashConfig, VehicleState, load_vehicles, simulate_splash

log = logging.getLogger("rainsim")

FRAME_SUFFIXES = (".bin", ".bin4", ".bin5", ".csv")
VEHICLE_SIDECAR = ".vehicles.json"
MANIFEST_NAME = "manifest.json"
SEED_RULE = "frame_seed = seed XOR frame_index"
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(RainSimError):
    """Bad command-line usage or missing input; maps to exit code 2."""


def frame_seed(seed: int, index: int) -> int:
    return (int(seed) ^ int(index)) & ((1 << 64) - 1)


def list_frames(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise UsageError(f"input directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)


def _load_json(path) -> object:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- simulate --------------------------------------------------------------


def _simulate_frame(job: dict) -> dict:
    lidar = LidarConfig.from_dict(job["lidar"])
    atmos = AtmosphereParams.from_dict(job["atmosphere"])
    splash = SplashConfig.from_dict({**job["splash"], "seed": job["seed"]})
    vehicles = [VehicleState.from_dict(v) for v in job["vehicles"]]
    cloud = read_pointcloud(job["input_path"])
    particles = simulate_splash(vehicles, splash)
    out = simulate_rain(cloud, particles, atmos, lidar)
    write_pointcloud(out, job["output_path"], "bin5")
    log.info("%s: %d -> %d points, %d rain noise", job["input"], len(cloud), len(out), int((out.labels == 1).sum()))
    return {
        "points_in": len(cloud),
        "points_out": len(out),
        "rain_noise": int((out.labels == 1).sum()),
        "particles": len(particles),
    }


def _prepare_output(out_dir: Path, force: bool) -> None:
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise UsageError(f"output directory {out_dir} is not empty; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)


def _run_jobs(jobs: list[dict], workers: int) -> list[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_simulate_frame(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_frame, jobs))


def cmd_simulate(args) -> int:
    if args.from_manifest:
        manifest = _load_json(args.from_manifest)
        try:
            input_dir = Path(manifest["input"])
            configs = manifest["configs"]
            seed = int(manifest["seed"])
            frames = [(f["input"], f["vehicles"]) for f in manifest["frames"]]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{args.from_manifest}: malformed manifest ({exc})") from None
        paths = {k: manifest.get(k) for k in ("lidar", "atmos", "splash")}
    else:
        missing = [f"--{k}" for k in ("input", "lidar", "atmos", "splash", "seed") if getattr(args, k) is None]
        if missing:
            raise UsageError(f"simulate requires {', '.join(missing)} (or --from-manifest)")
        input_dir = Path(args.input)
        configs = {
            "lidar": LidarConfig.from_dict(_load_json(args.lidar)).to_dict(),
            "atmosphere": AtmosphereParams.from_dict(_load_json(args.atmos)).to_dict(),
            "splash": SplashConfig.from_dict(_load_json(args.splash)).to_dict(),
        }
        seed = args.seed
        frames = []
        for p in list_frames(input_dir):
            sidecar = p.with_name(p.stem + VEHICLE_SIDECAR)
            vehicles = [v.to_dict() for v in load_vehicles(sidecar)] if sidecar.is_file() else []
            frames.append((p.name, vehicles))
        paths = {"lidar": args.lidar, "atmos": args.atmos, "splash": args.splash}

    out_dir = Path(args.output)
    _prepare_output(out_dir, args.force)
    jobs = []
    for index, (name, vehicles) in enumerate(frames):
        src = input_dir / name
        if not src.is_file():
            raise UsageError(f"input frame not found: {src}")
        jobs.append(
            {
                "index": index,
                "input": name,
                "input_path": str(src),
                "output": Path(name).stem + ".bin5",
                "output_path": str(out_dir / (Path(name).stem + ".bin5")),
                "seed": frame_seed(seed, index),
                "vehicles": vehicles,
                **configs,
            }
        )
    workers = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    stats = _run_jobs(jobs, workers)

    manifest = {
        "tool": "rainsim",
        "version": __version__,
        "seed": seed,
        "seed_rule": SEED_RULE,
        "input": str(input_dir),
        **paths,
        "configs": configs,
        "frames": [
            {k: j[k] for k in ("index", "input", "output", "seed", "vehicles")} | s for j, s in zip(jobs, stats)
        ],
    }
    _dump_json(manifest, out_dir / MANIFEST_NAME)
    return 0


# -- stats -----------------------------------------------------------------


def _read_corpus(directory) -> list[PointCloud]:
    return [read_pointcloud(p) for p in list_frames(Path(directory))]


def _write_report(obj: dict, csv_text: str, out: Path) -> None:
    if out.suffix.lower() == ".csv":
        out.write_text(csv_text)
    else:
        _dump_json(obj, out)


def cmd_stats(args) -> int:
    real = _read_corpus(args.real)
    sim = _read_corpus(args.sim)
    if [c.frame_id for c in real] != [c.frame_id for c in sim]:
        log.warning("real and sim corpora list different frame names; pooling anyway")
    origin = LidarConfig.from_dict(_load_json(args.lidar)).origin if args.lidar else (0.0, 0.0, 0.0)
    report = gap_report(real, sim, args.bin_width, origin)
    _write_report(report.to_dict(), report.to_csv(), Path(args.out))
    return 0


# -- distill ---------------------------------------------------------------


def cmd_distill(args) -> int:
    raw_pairs = _load_json(args.pairs)
    if not isinstance(raw_pairs, list):
        raise FormatError(f"{args.pairs}: expected a JSON array of instance pairs")
    pairs = [InstancePair.from_dict(d) for d in raw_pairs]
    raw_preds = _load_json(args.preds)
    if not isinstance(raw_preds, dict):
        raise FormatError(f"{args.preds}: expected a JSON object")
    preds = PredictionSet.from_dict(raw_preds)
    weights = LossWeights.from_dict(_load_json(args.weights)) if args.weights else DEFAULT_WEIGHTS
    cloud_path = args.cloud or raw_preds.get("cloud")
    cloud = None
    if cloud_path:
        cloud_path = Path(cloud_path)
        if not cloud_path.is_absolute() and not args.cloud:
            cloud_path = Path(args.preds).parent / cloud_path
        if not cloud_path.is_file():
            raise UsageError(f"cloud file not found: {cloud_path}")
        cloud = read_pointcloud(cloud_path)
    report = loss_report(
        pairs,
        preds,
        cloud,
        weights,
        sup_cls=float(raw_preds.get("sup_cls", 0.0)),
        sup_reg=float(raw_preds.get("sup_reg", 0.0)),
    )
    _dump_json(report, Path(args.out))
    return 0


# -- eval ------------------------------------------------------------------


def _as_frames(obj, what: str) -> dict:
    """Detections/ground truth as {frame: list}; a bare list is a single frame."""
    if isinstance(obj, list):
        return {"": obj}
    if isinstance(obj, dict):
        return obj
    raise FormatError(f"{what}: expected a list or an object keyed by frame")


def _gt_box(rec):
    return rec["box"] if isinstance(rec, dict) else rec


def cmd_eval(args) -> int:
    try:
        thresholds = [float(t) for t in args.iou.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--iou must be comma-separated numbers, got {args.iou!r}") from None
    preds = _as_frames(_load_json(args.pred), args.pred)
    gts = _as_frames(_load_json(args.gt), args.gt)
    totals = None
    try:
        for frame in sorted(set(preds) | set(gts)):
            p = [(r["box"], float(r["confidence"])) for r in preds.get(frame, [])]
            g = [_gt_box(r) for r in gts.get(frame, [])]
            res = precision_recall(p, g, thresholds)
            totals = res if totals is None else [a + b for a, b in zip(totals, res)]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, RainSimError):
            raise
        raise FormatError(f"malformed detection record: {exc}") from None
    if totals is None:
        totals = precision_recall([], [], thresholds)
    rows = [m.to_dict() for m in totals]
    out = Path(args.out)
    if out.suffix.lower() == ".csv":
        lines = ["threshold,tp,fp,fn,precision,recall"]
        lines += [",".join(repr(r[k]) for k in ("threshold", "tp", "fp", "fn", "precision", "recall")) for r in rows]
        out.write_text("\n".join(lines) + "\n")
    else:
        _dump_json({"matches": rows}, out)
    return 0


# -- entry points ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rainsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rainsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="turn a directory of clear frames into labelled rainy frames")
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--lidar")
    p.add_argument("--atmos")
    p.add_argument("--splash")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--force", action="store_true")
    p.add_argument("--from-manifest", help="re-run using the configs, seed and frames recorded in a manifest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="intensity and per-range point-count gaps between two corpora")
    p.add_argument("--real", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--bin-width", type=float, default=10.0)
    p.add_argument("--lidar", help="lidar config whose origin ranges are measured from")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("distill", help="evaluate distillation losses on serialized batches")
    p.add_argument("--pairs", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--weights")
    p.add_argument("--cloud", help="labelled cloud for the noise-aware term (overrides preds['cloud'])")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="precision/recall of detections at BEV IoU thresholds")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", default="0.3,0.5,0.7")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def _configure_logging() -> None:
    level = _LEVELS.get(os.environ.get("RAINSIM_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, FormatError, OSError) as exc:
        print(f"rainsim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RainSimError as exc:
        print(f"rainsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
