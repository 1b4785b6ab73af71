#!/usr/bin/env python3
"""Generate file-oracle fixtures (pose .txt + depth .pfm) from models.

    python make_fixtures.py --pose-model pose.onnx --depth-model depth.onnx \\
        --images images/ --out fixtures/

Each model argument is either an exported .onnx (run through onnxruntime,
configured by its manifest) or a torch checkpoint (run directly; no ONNX
packages needed). Outputs follow the fruitlet-metric file-oracle layout:
``<out>/<image_id>.txt`` in the 12-field prediction grammar and
``<out>/<image_id>.pfm`` as relative inverse depth resized to the source
image, and every written file is validated by parsing it back through
fruitlet_metric.dataset_io before the script reports success.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from exportlib.models import load_checkpoint
from exportlib.runners import OnnxRunner, TorchRunner

from fruitlet_metric.dataset_io import DepthConvention, load_depth, parse_pose_file, write_pfm

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
POSE_FIELDS = 11


def make_runner(model_path: Path, default_size: int):
    model_path = Path(model_path)
    if model_path.suffix == ".onnx":
        return OnnxRunner(model_path)
    return TorchRunner(load_checkpoint(model_path), size=default_size)


def pose_rows_to_lines(rows: np.ndarray, confidence_threshold: float) -> str:
    rows = np.asarray(rows, np.float64).reshape(-1, rows.shape[-1])
    if rows.shape[-1] != POSE_FIELDS:
        raise ValueError(f"expected {POSE_FIELDS} fields per row, got {rows.shape[-1]}")
    lines = []
    for cx, cy, w, h, conf, x1, y1, v1, x2, y2, v2 in rows:
        if conf < confidence_threshold or w <= 0 or h <= 0:
            continue
        clip = lambda value: min(1.0, max(0.0, float(value)))
        vis = lambda value: int(round(min(2.0, max(0.0, float(value)))))
        lines.append(" ".join([
            "0",
            repr(clip(cx)), repr(clip(cy)), repr(clip(w)), repr(clip(h)),
            repr(clip(x1)), repr(clip(y1)), str(vis(v1)),
            repr(clip(x2)), repr(clip(y2)), str(vis(v2)),
            repr(clip(conf)),
        ]))
    return "\n".join(lines) + ("\n" if lines else "")


def depth_output_to_raster(raw: np.ndarray, width: int, height: int) -> np.ndarray:
    values = np.asarray(raw, np.float32).squeeze()
    if values.ndim != 2:
        raise ValueError(f"depth output has shape {np.asarray(raw).shape}")
    if values.shape != (height, width):
        values = np.asarray(
            Image.fromarray(values, mode="F").resize((width, height), Image.BILINEAR),
            dtype=np.float32,
        )
    return np.maximum(values, 0.0)


def generate_fixtures(pose_runner, depth_runner, images_dir: Path, out_dir: Path,
                      confidence_threshold: float) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    image_paths = sorted(p for p in Path(images_dir).iterdir()
                         if p.suffix.lower() in IMAGE_SUFFIXES)
    if not image_paths:
        raise FileNotFoundError(f"no images under {images_dir}")

    image_ids = []
    for path in image_paths:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"))
        image_id = path.stem
        if pose_runner is not None:
            rows = pose_runner.run(rgb)
            (out_dir / f"{image_id}.txt").write_text(
                pose_rows_to_lines(rows, confidence_threshold), encoding="utf-8")
        if depth_runner is not None:
            raster = depth_output_to_raster(
                depth_runner.run(rgb), rgb.shape[1], rgb.shape[0])
            write_pfm(raster, out_dir / f"{image_id}.pfm")
        image_ids.append(image_id)
    return image_ids


def validate_fixtures(out_dir: Path, image_ids: list[str]) -> int:
    """Parse every written fixture back through the consuming library."""
    n_detections = 0
    for image_id in image_ids:
        pose_path = out_dir / f"{image_id}.txt"
        if pose_path.is_file():
            n_detections += len(parse_pose_file(pose_path.read_text(encoding="utf-8"), image_id))
        depth_path = out_dir / f"{image_id}.pfm"
        if depth_path.is_file():
            load_depth(depth_path, DepthConvention.RELATIVE_INVERSE_DEPTH)
    return n_detections


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pose-model", default=None, help=".onnx or torch checkpoint")
    parser.add_argument("--depth-model", default=None, help=".onnx or torch checkpoint")
    parser.add_argument("--images", required=True, help="directory of PNG/JPEG images")
    parser.add_argument("--out", required=True, help="file-oracle output directory")
    parser.add_argument("--pose-size", type=int, default=640,
                        help="input size for torch pose checkpoints")
    parser.add_argument("--depth-size", type=int, default=518,
                        help="input size for torch depth checkpoints")
    parser.add_argument("--confidence", type=float, default=0.25)
    args = parser.parse_args(argv)

    if args.pose_model is None and args.depth_model is None:
        parser.error("need --pose-model and/or --depth-model")

    try:
        pose_runner = make_runner(args.pose_model, args.pose_size) if args.pose_model else None
        depth_runner = make_runner(args.depth_model, args.depth_size) if args.depth_model else None
        image_ids = generate_fixtures(
            pose_runner, depth_runner, Path(args.images), Path(args.out), args.confidence)
        n_detections = validate_fixtures(Path(args.out), image_ids)
    except (FileNotFoundError, ValueError, ImportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote fixtures for {len(image_ids)} images under {args.out} "
          f"({n_detections} pose detections); all files parse cleanly")
    return 0


if __name__ == "__main__":
    sys.exit(main())
