"""Batch command-line front end.

Subcommands:
    project    write ground-truth-derived structured polygons per frame
    recover    run polygon -> height -> coarse box (-> refinement) and write
               KITTI-format prediction files
    eval       score predictions against labels (AP table + mean depth error)
    benchmark  synthetic noise sweep: CSV of error/AP vs noise plus
               deviation histograms

Every command is deterministic given (inputs, config, seed); per-frame work
uses rng streams derived from (seed, frame index, stage).  Exit codes:
0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bev, depth, evaluation, heatmap, kitti, synthetic
from .errors import DegenerateEdgeError, Mono3dError
from .geometry import Box3D, CameraIntrinsics

log = logging.getLogger("mono3d")

ENV_DATASET_ROOT = "MONO3D_DATASET_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

# rng stream tags so stages draw independent noise
_STAGE_POLYGON = 0
_STAGE_HEIGHT = 1
_STAGE_RESIDUAL = 2


class ConfigError(Mono3dError):
    pass


@dataclass
class RunConfig:
    dataset_root: str | None = None
    split_file: str | None = None
    polygon_source: str = "oracle"
    height_source: str = "oracle"
    sigma_px: float = 0.0
    sigma_height: float = 0.0
    refine: str = "off"
    seed: int | None = None
    out: str = "out"
    jobs: int = 1
    resolution: float = 0.1
    n_slices: int = 8
    ap_points: int = 11
    # benchmark-only knobs
    frames: int = 100
    objects_per_frame: int = 3
    sigma_px_list: str = "0,0.5,1.0"
    sigma_height_list: str = "0"

    def require_seed_if_stochastic(self):
        stochastic = (
            self.sigma_px > 0 or self.sigma_height > 0
            or self.polygon_source == "oracle" or self.height_source == "oracle"
        )
        if stochastic and self.seed is None:
            raise ConfigError("--seed is mandatory for any stochastic mode")


def _frame_rng(seed: int | None, frame_index: int, stage: int) -> np.random.Generator:
    return np.random.default_rng([0 if seed is None else seed, frame_index, stage])


def _parse_source(value: str, allowed: tuple[str, ...]) -> tuple[str, str | None]:
    """Split 'oracle' / 'prior' / 'file:PATH' into (kind, path)."""
    if value.startswith("file:"):
        path = value[5:]
        if not path:
            raise ConfigError(f"empty path in source {value!r}")
        return "file", path
    if value in allowed:
        return value, None
    raise ConfigError(f"invalid source {value!r}; expected one of {allowed} or file:PATH")


def _read_split(cfg: RunConfig) -> list[str]:
    root = Path(cfg.dataset_root)
    if cfg.split_file:
        text = Path(cfg.split_file).read_text()
    elif (root / "split.txt").exists():
        text = (root / "split.txt").read_text()
    else:
        names = sorted(p.stem for p in (root / "calib").glob("*.txt"))
        return names
    return [line.strip() for line in text.splitlines() if line.strip()]


def _load_frame(root: Path, frame_id: str) -> tuple[CameraIntrinsics, list[kitti.LabelRecord]]:
    calib = kitti.parse_calib((root / "calib" / f"{frame_id}.txt").read_text())
    label_path = root / "label_2" / f"{frame_id}.txt"
    labels = kitti.parse_labels(label_path.read_text()) if label_path.exists() else []
    return calib.camera, labels


def _run_frames(frame_ids: list[str], worker, jobs: int) -> list:
    """Apply worker(index, frame_id) to all frames, results in frame order."""
    if jobs <= 1:
        return [worker(i, f) for i, f in enumerate(frame_ids)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, range(len(frame_ids)), frame_ids))


# --------------------------------------------------------------------------- project

def cmd_project(cfg: RunConfig) -> int:
    if not cfg.dataset_root:
        raise ConfigError("--dataset-root is required")
    cfg.require_seed_if_stochastic()
    root = Path(cfg.dataset_root)
    out_dir = Path(cfg.out) / "polygons"
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_ids = _read_split(cfg)

    def worker(index: int, frame_id: str):
        try:
            K, labels = _load_frame(root, frame_id)
        except (OSError, Mono3dError) as exc:
            log.warning("skipping frame %s: %s", frame_id, exc)
            return None
        rng = _frame_rng(cfg.seed, index, _STAGE_POLYGON)
        polygons = {}
        for obj_id, rec in enumerate(labels):
            if rec.is_dontcare:
                continue
            est = heatmap.oracle_polygon_provider(K, rec.box, cfg.sigma_px, rng)
            polygons[obj_id] = est.polygon
        return frame_id, kitti.write_polygons(polygons)

    results = _run_frames(frame_ids, worker, cfg.jobs)
    n_ok = 0
    for res in results:
        if res is None:
            continue
        frame_id, text = res
        (out_dir / f"{frame_id}.txt").write_text(text)
        n_ok += 1
    log.info("wrote polygons for %d/%d frames", n_ok, len(frame_ids))
    if frame_ids and n_ok == 0:
        return EXIT_DATA
    return EXIT_OK


# --------------------------------------------------------------------------- recover

def _recover_frame(cfg: RunConfig, root: Path, index: int, frame_id: str,
                   poly_src: tuple, height_src: tuple, refine_src: tuple):
    K, labels = _load_frame(root, frame_id)
    gt_boxes = {i: rec.box for i, rec in enumerate(labels) if not rec.is_dontcare}

    poly_kind, poly_path = poly_src
    if poly_kind == "oracle":
        rng = _frame_rng(cfg.seed, index, _STAGE_POLYGON)
        polygons = {i: heatmap.oracle_polygon_provider(K, b, cfg.sigma_px, rng).polygon
                    for i, b in gt_boxes.items()}
    else:
        polygons = kitti.parse_polygons((Path(poly_path) / f"{frame_id}.txt").read_text())

    height_kind, height_path = height_src
    prior = depth.HeightPrior()
    if height_kind == "file":
        t_map = kitti.parse_heights((Path(height_path) / f"{frame_id}.txt").read_text())
        heights = {i: depth.decode_height(t, prior) for i, t in t_map.items()}
    elif height_kind == "oracle":
        rng = _frame_rng(cfg.seed, index, _STAGE_HEIGHT)
        heights = {i: depth.oracle_height(b.h, cfg.sigma_height, rng)
                   for i, b in gt_boxes.items()}
    else:  # constant prior
        heights = {i: prior.average_height for i in polygons}

    refine_kind, refine_path = refine_src
    file_residuals = {}
    if refine_kind == "file":
        file_residuals = kitti.parse_residuals(
            (Path(refine_path) / f"{frame_id}.txt").read_text())

    dets = []
    skipped = 0
    for obj_id in sorted(polygons):
        if obj_id not in heights:
            skipped += 1
            continue
        try:
            box = depth.recover_coarse_box(K, polygons[obj_id], heights[obj_id])
        except (DegenerateEdgeError, Mono3dError) as exc:
            log.debug("frame %s object %d: %s", frame_id, obj_id, exc)
            skipped += 1
            continue
        if refine_kind == "oracle" and obj_id in gt_boxes:
            box = bev.apply_residuals(box, bev.residuals_between(box, gt_boxes[obj_id]))
        elif refine_kind == "file" and obj_id in file_residuals:
            box = bev.apply_residuals(box, bev.BoxResiduals(*file_residuals[obj_id]))
        dets.append(evaluation.Detection(box=box, score=1.0, frame_id=frame_id))
    return frame_id, kitti.write_predictions(dets, K), skipped


def cmd_recover(cfg: RunConfig) -> int:
    if not cfg.dataset_root:
        raise ConfigError("--dataset-root is required")
    cfg.require_seed_if_stochastic()
    poly_src = _parse_source(cfg.polygon_source, ("oracle",))
    height_src = _parse_source(cfg.height_source, ("prior", "oracle"))
    refine_src = _parse_source(cfg.refine, ("off", "oracle"))
    root = Path(cfg.dataset_root)
    out_dir = Path(cfg.out) / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_ids = _read_split(cfg)

    def worker(index: int, frame_id: str):
        try:
            return _recover_frame(cfg, root, index, frame_id, poly_src, height_src, refine_src)
        except (OSError, Mono3dError) as exc:
            log.warning("skipping frame %s: %s", frame_id, exc)
            return None

    results = _run_frames(frame_ids, worker, cfg.jobs)
    n_ok, total_skipped = 0, 0
    for res in results:
        if res is None:
            continue
        frame_id, text, skipped = res
        (out_dir / f"{frame_id}.txt").write_text(text)
        n_ok += 1
        total_skipped += skipped
    summary = {"frames": len(frame_ids), "frames_written": n_ok,
               "objects_skipped": total_skipped}
    (Path(cfg.out) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    log.info("recovered %d/%d frames (%d objects skipped)", n_ok, len(frame_ids), total_skipped)
    if frame_ids and n_ok == 0:
        return EXIT_DATA
    return EXIT_OK


# --------------------------------------------------------------------------- eval

def _load_detections(pred_dir: Path, frame_ids: list[str]) -> list[evaluation.Detection]:
    dets = []
    for frame_id in frame_ids:
        path = pred_dir / f"{frame_id}.txt"
        if not path.exists():
            continue
        for rec in kitti.parse_labels(path.read_text()):
            dets.append(evaluation.Detection(
                box=rec.box, score=rec.score if rec.score is not None else 1.0,
                frame_id=frame_id))
    return dets


def _load_ground_truths(root: Path, frame_ids: list[str]) -> list[evaluation.GroundTruth]:
    gts = []
    for frame_id in frame_ids:
        path = root / "label_2" / f"{frame_id}.txt"
        if not path.exists():
            continue
        for rec in kitti.parse_labels(path.read_text()):
            if rec.is_dontcare:
                continue
            gts.append(rec.to_ground_truth(frame_id))
    return gts


def cmd_eval(cfg: RunConfig, predictions: str | None = None) -> int:
    if not cfg.dataset_root:
        raise ConfigError("--dataset-root is required")
    root = Path(cfg.dataset_root)
    pred_dir = Path(predictions) if predictions else Path(cfg.out) / "data"
    frame_ids = _read_split(cfg)
    gts = _load_ground_truths(root, frame_ids)
    if not gts:
        log.error("no ground truth found under %s", root)
        return EXIT_DATA
    dets = _load_detections(pred_dir, frame_ids)
    report = evaluation.evaluate_detections(dets, gts, n_points=cfg.ap_points)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.json").write_text(json.dumps(report.to_records(), indent=2) + "\n")
    sys.stdout.write(report.to_text())
    return EXIT_OK


# --------------------------------------------------------------------------- benchmark

HIST_BIN = 0.25
HIST_MAX = 5.0  # deviations above this land in the overflow bin


def _deviation_histogram(values: np.ndarray) -> np.ndarray:
    edges = np.arange(0.0, HIST_MAX + HIST_BIN, HIST_BIN)
    counts, _ = np.histogram(np.minimum(values, HIST_MAX - 1e-9), bins=edges)
    return counts


def _benchmark_cell(cfg: RunConfig, sigma_px: float, sigma_height: float,
                    grid_spec: bev.BevGridSpec):
    K = synthetic.default_camera()

    def worker(index: int, frame_id: str):
        rng_scene = np.random.default_rng([0 if cfg.seed is None else cfg.seed, index])
        boxes = synthetic.make_frame(rng_scene, n_objects=cfg.objects_per_frame, K=K)
        rng_poly = _frame_rng(cfg.seed, index, _STAGE_POLYGON)
        rng_h = _frame_rng(cfg.seed, index, _STAGE_HEIGHT)
        dets, gts, dx, dz, dzerr = [], [], [], [], []
        for b in boxes:
            poly = heatmap.oracle_polygon_provider(K, b, sigma_px, rng_poly).polygon
            height = depth.oracle_height(b.h, sigma_height, rng_h)
            gts.append(evaluation.GroundTruth(
                box=b, bbox2d=synthetic.box_to_label(K, b).bbox2d, frame_id=frame_id))
            try:
                coarse = depth.recover_coarse_box(K, poly, height)
            except Mono3dError:
                continue
            dets.append(evaluation.Detection(box=coarse, score=1.0, frame_id=frame_id))
            dx.append(abs(coarse.x - b.x))
            dz.append(abs(coarse.z - b.z))
            dzerr.append(abs(coarse.z - b.z))
        # exercise the BEV path on the same scene
        depth_map = synthetic.render_depth(K, boxes)
        points = bev.depth_to_points(synthetic.depth_raster_camera(K), depth_map)
        bev.rasterize_bev(points, grid_spec)
        return dets, gts, dx, dz, dzerr

    frame_ids = [f"{i:06d}" for i in range(cfg.frames)]
    results = _run_frames(frame_ids, worker, cfg.jobs)
    all_dets, all_gts, all_dx, all_dz, all_dzerr = [], [], [], [], []
    for dets, gts, dx, dz, dzerr in results:
        all_dets.extend(dets)
        all_gts.extend(gts)
        all_dx.extend(dx)
        all_dz.extend(dz)
        all_dzerr.extend(dzerr)
    ap_bev = evaluation.average_precision(
        all_dets, all_gts, evaluation.rotated_iou_bev, 0.7,
        evaluation.Difficulty.MODERATE, n_points=cfg.ap_points)
    ap_3d = evaluation.average_precision(
        all_dets, all_gts, evaluation.iou_3d, 0.7,
        evaluation.Difficulty.MODERATE, n_points=cfg.ap_points)
    mde = float(np.mean(all_dzerr)) if all_dzerr else float("nan")
    return {
        "mean_depth_error": mde,
        "ap_bev_70_moderate": ap_bev,
        "ap_3d_70_moderate": ap_3d,
        "hist_dx": _deviation_histogram(np.array(all_dx)),
        "hist_dz": _deviation_histogram(np.array(all_dz)),
        "n_objects": len(all_dx),
    }


def cmd_benchmark(cfg: RunConfig) -> int:
    cfg.require_seed_if_stochastic()
    if cfg.seed is None:
        raise ConfigError("--seed is mandatory for benchmark")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sigmas_px = [float(s) for s in cfg.sigma_px_list.split(",") if s.strip()]
    sigmas_h = [float(s) for s in cfg.sigma_height_list.split(",") if s.strip()]
    grid_spec = bev.BevGridSpec(resolution=cfg.resolution, n_slices=cfg.n_slices)

    sweep_lines = ["sigma_px,sigma_height,n_objects,mean_depth_error,"
                   "ap_bev_70_moderate,ap_3d_70_moderate"]
    hist_lines = ["sigma_px,sigma_height,axis,bin_lo,bin_hi,count"]
    for sp in sigmas_px:
        for sh in sigmas_h:
            cell = _benchmark_cell(cfg, sp, sh, grid_spec)
            sweep_lines.append(
                f"{sp:.6f},{sh:.6f},{cell['n_objects']},{cell['mean_depth_error']:.6f},"
                f"{cell['ap_bev_70_moderate']:.6f},{cell['ap_3d_70_moderate']:.6f}")
            for axis in ("x", "z"):
                counts = cell[f"hist_d{axis}"]
                for k, count in enumerate(counts):
                    lo, hi = k * HIST_BIN, (k + 1) * HIST_BIN
                    hist_lines.append(
                        f"{sp:.6f},{sh:.6f},{axis},{lo:.2f},{hi:.2f},{int(count)}")
            log.info("sigma_px=%g sigma_height=%g: mde=%.3f m, AP_BEV@0.7=%.3f",
                     sp, sh, cell["mean_depth_error"], cell["ap_bev_70_moderate"])
    (out / "sweep.csv").write_text("\n".join(sweep_lines) + "\n")
    (out / "histograms.csv").write_text("\n".join(hist_lines) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------- wiring

def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON file mirroring the flags")
    parser.add_argument("--dataset-root", help=f"dataset root (or ${ENV_DATASET_ROOT})")
    parser.add_argument("--split-file", help="text file of frame ids, one per line")
    parser.add_argument("--polygon-source", help="oracle or file:PATH")
    parser.add_argument("--height-source", help="prior, oracle, or file:PATH")
    parser.add_argument("--sigma-px", type=float, help="polygon pixel noise std")
    parser.add_argument("--sigma-height", type=float, help="height log-noise std")
    parser.add_argument("--refine", help="off, oracle, or file:PATH")
    parser.add_argument("--seed", type=int, help="rng seed (mandatory when stochastic)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, help="worker pool size (default 1)")
    parser.add_argument("--resolution", type=float, help="BEV cell size in meters")
    parser.add_argument("--n-slices", type=int, help="BEV vertical slice count")
    parser.add_argument("--ap-points", type=int, choices=(11, 40),
                        help="interpolation points for AP")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mono3d", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="write oracle structured polygons per frame")
    _add_common(p)

    p = sub.add_parser("recover", help="recover coarse (optionally refined) 3D boxes")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _add_common(p)
    p.add_argument("--predictions", help="prediction dir (default OUT/data)")

    p = sub.add_parser("benchmark", help="synthetic noise sweep")
    _add_common(p)
    p.add_argument("--frames", type=int, help="number of synthetic frames")
    p.add_argument("--objects-per-frame", type=int, help="boxes per synthetic frame")
    p.add_argument("--sigma-px-list", help="comma-separated pixel-noise sweep")
    p.add_argument("--sigma-height-list", help="comma-separated height-noise sweep")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            setattr(cfg, field.name, value)
    if cfg.dataset_root is None and os.environ.get(ENV_DATASET_ROOT):
        cfg.dataset_root = os.environ[ENV_DATASET_ROOT]
    return cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "project":
            return cmd_project(cfg)
        if args.command == "recover":
            return cmd_recover(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, predictions=getattr(args, "predictions", None))
        if args.command == "benchmark":
            return cmd_benchmark(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, Mono3dError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
