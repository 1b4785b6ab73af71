"""Command-line front end: reconstruct, measure, eval, report.

Images are processed by a bounded thread pool (``FRUITLET_METRIC_THREADS``
overrides the size); all output rows are collected and sorted before writing
so results are deterministic regardless of scheduling. Exit codes: 0 success,
2 bad configuration, 3 empty input, 4 every image failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import dataset_io, depth_reconstruction, evaluation, inference_adapter, report
from .config import ALIGN_FIXED, PipelineConfig, load_config
from .dataset_io import DepthConvention, DepthMap, PoseDetection
from .depth_reconstruction import IDENTITY_ALIGNMENT, ScaleAlignment
from .errors import ConfigError, FruitletMetricError
from .evaluation import LengthRecord, length_error_stats
from .inference_adapter import PhaseTiming, mean_phase_timing
from .pose_measurement import match_to_ground_truth, measure_length

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_EMPTY_INPUT = 3
EXIT_ALL_FAILED = 4


def list_image_ids(cfg: PipelineConfig) -> list[str]:
    """Image ids to process: split manifest first, then label files, then depth files."""
    if cfg.split_manifest is not None:
        assignment = dataset_io.load_split_manifest(cfg.split_manifest)
        return sorted(i for i, split in assignment.items() if split == cfg.split)
    if cfg.labels_dir is not None and cfg.labels_dir.is_dir():
        return sorted(p.stem for p in cfg.labels_dir.glob("*.txt"))
    for backend in cfg.depth_backends.values():
        if backend.prediction_dir is not None:
            return sorted({p.stem for p in Path(backend.prediction_dir).glob("*.png")}
                          | {p.stem for p in Path(backend.prediction_dir).glob("*.pfm")})
    return []


def load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _rgb_for(cfg: PipelineConfig, image_id: str) -> Optional[np.ndarray]:
    if cfg.images_dir is None:
        return None
    path = cfg.images_dir / f"{image_id}.png"
    return load_rgb(path) if path.is_file() else None


def _align_depth(cfg: PipelineConfig, image_id: str, depth: DepthMap) -> tuple[DepthMap, ScaleAlignment]:
    """Turn any-convention depth into metric, reporting the alignment used."""
    if depth.convention is DepthConvention.METRIC_METERS:
        return depth, IDENTITY_ALIGNMENT
    if cfg.alignment.mode == ALIGN_FIXED:
        alignment = depth_reconstruction.fixed_distance_alignment(
            depth, cfg.alignment.fixed_distance_m)
    else:
        if cfg.reference_depth_dir is None:
            raise ConfigError("align=reference needs dataset.reference_depth_dir")
        reference_path = cfg.reference_depth_dir / f"{image_id}.png"
        reference = dataset_io.load_depth(
            reference_path, DepthConvention.METRIC_METERS,
            expected_size=(depth.width, depth.height),
        )
        alignment = depth_reconstruction.fit_scale(depth, reference, cfg.sample_stride)
    return depth_reconstruction.to_metric(depth, alignment), alignment


def _pool_map(cfg: PipelineConfig, fn, image_ids: Sequence[str]) -> list:
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, image_ids))


def _require_single_pose_backend(cfg: PipelineConfig):
    if len(cfg.pose_backends) != 1:
        raise ConfigError(
            f"this command needs exactly one [pose.<name>] section, found {len(cfg.pose_backends)}"
        )
    return next(iter(cfg.pose_backends.items()))


def _check_reference_configured(cfg: PipelineConfig) -> None:
    needs_fit = cfg.alignment.mode != ALIGN_FIXED and any(
        b.depth_convention is not DepthConvention.METRIC_METERS
        for b in cfg.depth_backends.values()
    )
    if needs_fit and cfg.reference_depth_dir is None:
        raise ConfigError(
            "align=reference with relative depth sources needs dataset.reference_depth_dir"
        )


def cmd_reconstruct(cfg: PipelineConfig) -> int:
    if not cfg.depth_backends:
        raise ConfigError("reconstruct needs at least one [depth.<name>] section")
    _check_reference_configured(cfg)
    image_ids = list_image_ids(cfg)
    if not image_ids:
        logger.error("no images to process")
        return EXIT_EMPTY_INPUT

    clouds_dir = cfg.output_dir / "clouds"
    clouds_dir.mkdir(parents=True, exist_ok=True)
    ply_format = "ascii" if cfg.ascii_ply else "binary-little-endian"
    alignment_rows: list[tuple[str, str, ScaleAlignment, int]] = []
    failures = 0
    total = 0

    for method in sorted(cfg.depth_backends):
        backend = inference_adapter.create_depth_backend(cfg.depth_backends[method])
        method_dir = clouds_dir / method if len(cfg.depth_backends) > 1 else clouds_dir
        method_dir.mkdir(parents=True, exist_ok=True)

        def process(image_id: str, method=method, backend=backend, method_dir=method_dir):
            try:
                rgb = _rgb_for(cfg, image_id)
                depth = backend.estimate(rgb, image_id)
                metric, alignment = _align_depth(cfg, image_id, depth)
                cloud = depth_reconstruction.depth_to_cloud(
                    metric, cfg.intrinsics, cfg.range_filter, rgb)
                dataset_io.write_ply(cloud, method_dir / f"{image_id}.ply", format=ply_format)
                return (method, image_id, alignment, len(cloud))
            except FruitletMetricError as exc:
                logger.warning("skipping %s/%s: %s", method, image_id, exc)
                return None

        for result in _pool_map(cfg, process, image_ids):
            total += 1
            if result is None:
                failures += 1
            else:
                alignment_rows.append(result)

    alignment_rows.sort(key=lambda row: (row[0], row[1]))
    log_lines = ["method,image_id,s,t,space,residual_rmse_m,inlier_count,points"]
    for method, image_id, alignment, n_points in alignment_rows:
        logger.info(
            "%s/%s: s=%.6g t=%.6g space=%s residual=%.4g m inliers=%d points=%d",
            method, image_id, alignment.s, alignment.t, alignment.space,
            alignment.residual_rmse_m, alignment.inlier_count, n_points,
        )
        log_lines.append(
            f"{method},{image_id},{alignment.s!r},{alignment.t!r},{alignment.space},"
            f"{alignment.residual_rmse_m!r},{alignment.inlier_count},{n_points}"
        )
    (cfg.output_dir / "alignment.csv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    if failures == total:
        return EXIT_ALL_FAILED
    return EXIT_OK


def _truth_annotations(cfg: PipelineConfig, image_id: str) -> list[PoseDetection]:
    if cfg.labels_dir is None:
        return []
    path = cfg.labels_dir / f"{image_id}.txt"
    if not path.is_file():
        return []
    return dataset_io.parse_pose_file(path.read_text(encoding="utf-8"), image_id)


def _truth_anchor_centers(cfg: PipelineConfig, image_id: str) -> Optional[dict[str, tuple[float, float]]]:
    """Pixel anchor per fruit id, from the image's ground-truth annotations.

    Fruit ids are positional: the k-th annotation line (1-based) is ``f<k>``.
    The caliper CSV must use the same ids.
    """
    annotations = _truth_annotations(cfg, image_id)
    if not annotations:
        return None
    return {
        f"f{index}": det.bbox.center_px(cfg.intrinsics.width, cfg.intrinsics.height)
        for index, det in enumerate(annotations, start=1)
    }


def cmd_measure(cfg: PipelineConfig) -> int:
    if not cfg.depth_backends:
        raise ConfigError("measure needs at least one [depth.<name>] section")
    if cfg.lengths_csv is None:
        raise ConfigError("measure needs dataset.lengths_csv")
    _check_reference_configured(cfg)
    _, pose_backend_cfg = _require_single_pose_backend(cfg)
    image_ids = list_image_ids(cfg)
    if not image_ids:
        logger.error("no images to process")
        return EXIT_EMPTY_INPUT

    truth_records = dataset_io.parse_ground_truth(cfg.lengths_csv)
    truth_by_image: dict[str, list] = {}
    for record in truth_records:
        truth_by_image.setdefault(record.image_id, []).append(record)

    all_records: list[LengthRecord] = []
    failures = 0
    total = 0
    for method in sorted(cfg.depth_backends):
        pose_backend = inference_adapter.create_pose_backend(pose_backend_cfg)
        depth_backend = inference_adapter.create_depth_backend(cfg.depth_backends[method])

        def process(image_id: str, method=method, pose_backend=pose_backend,
                    depth_backend=depth_backend):
            try:
                rgb = _rgb_for(cfg, image_id)
                detections, _ = pose_backend.detect(rgb, image_id)
                depth = depth_backend.estimate(rgb, image_id)
                metric, _ = _align_depth(cfg, image_id, depth)
                measured = []
                for det in detections:
                    try:
                        measured.append(measure_length(det, metric, cfg.intrinsics))
                    except FruitletMetricError as exc:
                        logger.debug("unmeasurable detection in %s: %s", image_id, exc)
                match = match_to_ground_truth(
                    measured,
                    truth_by_image.get(image_id, []),
                    image_id,
                    method=method,
                    truth_centers_px=_truth_anchor_centers(cfg, image_id),
                    image_size=(cfg.intrinsics.width, cfg.intrinsics.height),
                )
                return list(match.records)
            except FruitletMetricError as exc:
                logger.warning("skipping %s/%s: %s", method, image_id, exc)
                return None

        for result in _pool_map(cfg, process, image_ids):
            total += 1
            if result is None:
                failures += 1
            else:
                all_records.extend(result)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "lengths.csv").write_text(
        report.write_lengths_csv(all_records), encoding="utf-8")
    logger.info("wrote %d length records to %s", len(all_records), cfg.output_dir / "lengths.csv")

    if total and failures == total:
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig) -> int:
    image_ids = list_image_ids(cfg)
    if not image_ids:
        logger.error("no images to evaluate")
        return EXIT_EMPTY_INPUT
    if not cfg.pose_backends:
        raise ConfigError("eval needs at least one [pose.<name>] section")
    if cfg.labels_dir is None:
        raise ConfigError("eval needs dataset.labels_dir")

    truths_by_image = {image_id: _truth_annotations(cfg, image_id) for image_id in image_ids}
    rows: dict[str, tuple[evaluation.DatasetDetectionMetrics, Optional[PhaseTiming]]] = {}
    for method in sorted(cfg.pose_backends):
        backend = inference_adapter.create_pose_backend(cfg.pose_backends[method])

        def process(image_id: str, backend=backend):
            rgb = _rgb_for(cfg, image_id)
            return image_id, backend.detect(rgb, image_id)

        preds_by_image = {}
        timings = []
        for image_id, (detections, timing) in _pool_map(cfg, process, image_ids):
            preds_by_image[image_id] = detections
            timings.append(timing)
        metrics = evaluation.evaluate_detections(
            preds_by_image, truths_by_image,
            iou_thresh=cfg.iou_threshold,
            oks_threshold=cfg.oks_threshold,
            kappa=cfg.oks_kappa,
        )
        rows[method] = (metrics, mean_phase_timing(timings) if timings else None)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    csv_text = report.write_metrics_csv(rows)
    (cfg.output_dir / "metrics.csv").write_text(csv_text, encoding="utf-8")
    summary = report.metrics_table_md(csv_text)
    print(summary)
    logger.info("wrote %s", cfg.output_dir / "metrics.csv")
    return EXIT_OK


def cmd_report(cfg: PipelineConfig, lengths_path: Optional[Path] = None) -> int:
    lengths_file = lengths_path or (cfg.output_dir / "lengths.csv")
    if not lengths_file.is_file():
        logger.error("no lengths CSV at %s (run 'measure' first or pass --lengths)", lengths_file)
        return EXIT_EMPTY_INPUT
    records = report.read_lengths_csv(lengths_file.read_text(encoding="utf-8"))
    if not records:
        logger.error("lengths CSV %s has no records", lengths_file)
        return EXIT_EMPTY_INPUT

    by_method: dict[str, list[LengthRecord]] = {}
    for record in records:
        by_method.setdefault(record.method, []).append(record)

    boxes = [report.box_stats(
        sorted({(r.image_id, r.fruit_id): r.actual_mm for r in records}.values()),
        "ground truth",
    )]
    stats = {}
    for method in sorted(by_method):
        method_records = by_method[method]
        boxes.append(report.box_stats([r.predicted_mm for r in method_records], method))
        stats[method] = length_error_stats(method_records)
        logger.info("%s: rmse=%.4f mm mae=%.4f mm over %d records",
                    method, stats[method].rmse_mm, stats[method].mae_mm, stats[method].n)

    missing = sorted(set(cfg.depth_backends) - set(by_method))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    svg = report.render_boxplot_svg(boxes, missing=missing)
    (cfg.output_dir / "boxplot.svg").write_text(svg, encoding="utf-8")

    metrics_file = cfg.output_dir / "metrics.csv"
    metrics_table = (report.metrics_table_md(metrics_file.read_text(encoding="utf-8"))
                     if metrics_file.is_file() else None)
    markdown = report.render_report_md(stats, metrics_table, "boxplot.svg", missing)
    (cfg.output_dir / "report.md").write_text(markdown, encoding="utf-8")
    logger.info("wrote %s and %s", cfg.output_dir / "boxplot.svg", cfg.output_dir / "report.md")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fruitlet-metric",
        description="Reconstruct metric point clouds, measure fruitlet lengths, and evaluate both.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("reconstruct", "write one PLY point cloud per image plus an alignment log"),
        ("measure", "measure calyx-peduncle lengths and match them to caliper truth"),
        ("eval", "compute detection/pose metrics per method"),
        ("report", "render the box plot and markdown report from saved CSVs"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="INI config file")
        cmd.add_argument("--backend", choices=["file", "onnx"], default=None,
                         help="override every backend kind")
        cmd.add_argument("--align", default=None, metavar="reference|fixed:<m>",
                         help="override the alignment mode")
        cmd.add_argument("--out", default=None, help="override the output directory")
        if name == "report":
            cmd.add_argument("--lengths", default=None,
                             help="length CSV to report on (default: <out>/lengths.csv)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    backend = {"file": "file-oracle", "onnx": "onnx"}.get(args.backend) if args.backend else None
    try:
        cfg = load_config(args.config, backend_override=backend,
                          align_override=args.align, out_override=args.out)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg)
        if args.command == "measure":
            return cmd_measure(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "report":
            lengths = Path(args.lengths) if args.lengths else None
            return cmd_report(cfg, lengths_path=lengths)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG_ERROR
    except FruitletMetricError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
