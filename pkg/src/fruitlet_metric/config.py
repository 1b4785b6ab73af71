"""Pipeline configuration: INI file plus CLI-flag overrides.

Precedence is flags > file > defaults. Backends are declared one per section:
``[pose.<name>]`` for detectors and ``[depth.<name>]`` for depth sources; the
section suffix is the method label used in reports (typically realsense,
dpt, or depth-anything-v2). Exactly one alignment mode is active:
``align = reference`` fits scale/shift against the metric reference raster of
each scene, ``align = fixed:<meters>`` calibrates to an assumed constant
capture distance.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .camera_geometry import CameraIntrinsics, intrinsics_from_fov
from .dataset_io import DepthConvention, load_intrinsics
from .depth_reconstruction import DEFAULT_FIT_STRIDE, DEFAULT_RANGE_FILTER_M, RangeFilter
from .errors import ConfigError, FruitletMetricError
from .inference_adapter import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_NMS_IOU,
    KIND_FILE_ORACLE,
    KIND_ONNX,
    BackendConfig,
)

THREADS_ENV_VAR = "FRUITLET_METRIC_THREADS"

ALIGN_REFERENCE = "reference"
ALIGN_FIXED = "fixed"


@dataclass(frozen=True)
class AlignmentMode:
    mode: str  # ALIGN_REFERENCE or ALIGN_FIXED
    fixed_distance_m: Optional[float] = None

    def __post_init__(self):
        if self.mode not in (ALIGN_REFERENCE, ALIGN_FIXED):
            raise ConfigError(f"unknown alignment mode {self.mode!r}")
        if self.mode == ALIGN_FIXED and not (self.fixed_distance_m or 0) > 0:
            raise ConfigError("fixed alignment needs a positive distance, e.g. fixed:0.61")


def parse_alignment(text: str) -> AlignmentMode:
    if text == ALIGN_REFERENCE:
        return AlignmentMode(ALIGN_REFERENCE)
    if text.startswith(ALIGN_FIXED + ":"):
        try:
            distance = float(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad fixed distance in {text!r}") from None
        return AlignmentMode(ALIGN_FIXED, fixed_distance_m=distance)
    raise ConfigError(f"alignment must be 'reference' or 'fixed:<meters>', got {text!r}")


@dataclass(frozen=True)
class PipelineConfig:
    dataset_root: Path
    images_dir: Optional[Path]
    labels_dir: Optional[Path]
    lengths_csv: Optional[Path]
    split_manifest: Optional[Path]
    split: str
    reference_depth_dir: Optional[Path]
    intrinsics: CameraIntrinsics
    pose_backends: dict[str, BackendConfig]
    depth_backends: dict[str, BackendConfig]
    range_filter: RangeFilter
    alignment: AlignmentMode
    sample_stride: int
    iou_threshold: float
    oks_threshold: float
    oks_kappa: float
    output_dir: Path
    threads: int
    ascii_ply: bool = False


def _resolve(root: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else root / path


def _optional_path(parser: configparser.ConfigParser, section: str, option: str,
                   root: Path) -> Optional[Path]:
    value = parser.get(section, option, fallback="").strip()
    return _resolve(root, value) if value else None


def _backend_config(parser: configparser.ConfigParser, section: str, root: Path,
                    kind_override: Optional[str], is_depth: bool) -> BackendConfig:
    kind = kind_override or parser.get(section, "kind", fallback=KIND_FILE_ORACLE)
    if kind == "file":  # CLI shorthand
        kind = KIND_FILE_ORACLE
    convention = DepthConvention(
        parser.get(section, "convention", fallback=DepthConvention.RELATIVE_INVERSE_DEPTH.value)
    ) if is_depth else DepthConvention.RELATIVE_INVERSE_DEPTH
    try:
        return BackendConfig(
            kind=kind,
            prediction_dir=_optional_path(parser, section, "prediction_dir", root),
            model_path=_optional_path(parser, section, "model_path", root),
            input_size=parser.getint(section, "input_size", fallback=640),
            confidence_threshold=parser.getfloat(
                section, "confidence_threshold", fallback=DEFAULT_CONFIDENCE_THRESHOLD),
            iou_nms_threshold=parser.getfloat(
                section, "iou_nms_threshold", fallback=DEFAULT_NMS_IOU),
            depth_convention=convention,
        )
    except FruitletMetricError as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def load_config(
    path: str | Path,
    backend_override: Optional[str] = None,
    align_override: Optional[str] = None,
    out_override: Optional[str] = None,
) -> PipelineConfig:
    """Read an INI config, applying CLI overrides where given."""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file {config_path} not found")
    parser = configparser.ConfigParser()
    parser.read(config_path, encoding="utf-8")

    root = _resolve(config_path.parent, parser.get("dataset", "root", fallback="."))
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} does not exist")

    if parser.has_option("camera", "intrinsics_file") and parser.get("camera", "intrinsics_file").strip():
        intrinsics = load_intrinsics(_resolve(root, parser.get("camera", "intrinsics_file")))
    else:
        try:
            intrinsics = intrinsics_from_fov(
                parser.getint("camera", "width", fallback=1280),
                parser.getint("camera", "height", fallback=720),
                parser.getfloat("camera", "hfov_deg", fallback=69.4),
                parser.getfloat("camera", "vfov_deg", fallback=42.5),
            )
        except FruitletMetricError as exc:
            raise ConfigError(f"[camera]: {exc}") from exc

    pose_backends = {}
    depth_backends = {}
    for section in parser.sections():
        if section.startswith("pose."):
            pose_backends[section[len("pose."):]] = _backend_config(
                parser, section, root, backend_override, is_depth=False)
        elif section.startswith("depth."):
            depth_backends[section[len("depth."):]] = _backend_config(
                parser, section, root, backend_override, is_depth=True)

    try:
        range_filter = RangeFilter(
            min_m=parser.getfloat("reconstruction", "min_m", fallback=DEFAULT_RANGE_FILTER_M[0]),
            max_m=parser.getfloat("reconstruction", "max_m", fallback=DEFAULT_RANGE_FILTER_M[1]),
        )
    except FruitletMetricError as exc:
        raise ConfigError(f"[reconstruction]: {exc}") from exc

    alignment = parse_alignment(
        align_override or parser.get("reconstruction", "align", fallback=ALIGN_REFERENCE)
    )

    threads_text = os.environ.get(THREADS_ENV_VAR, "").strip() or \
        parser.get("output", "threads", fallback="").strip()
    if threads_text:
        try:
            threads = int(threads_text)
        except ValueError:
            raise ConfigError(f"threads must be an integer, got {threads_text!r}") from None
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
    else:
        threads = os.cpu_count() or 1

    output_dir = Path(out_override) if out_override else _resolve(
        root, parser.get("output", "dir", fallback="out"))

    return PipelineConfig(
        dataset_root=root,
        images_dir=_optional_path(parser, "dataset", "images_dir", root),
        labels_dir=_optional_path(parser, "dataset", "labels_dir", root),
        lengths_csv=_optional_path(parser, "dataset", "lengths_csv", root),
        split_manifest=_optional_path(parser, "dataset", "split_manifest", root),
        split=parser.get("dataset", "split", fallback="test"),
        reference_depth_dir=_optional_path(parser, "dataset", "reference_depth_dir", root),
        intrinsics=intrinsics,
        pose_backends=pose_backends,
        depth_backends=depth_backends,
        range_filter=range_filter,
        alignment=alignment,
        sample_stride=parser.getint("reconstruction", "sample_stride", fallback=DEFAULT_FIT_STRIDE),
        iou_threshold=parser.getfloat("evaluation", "iou_threshold", fallback=0.5),
        oks_threshold=parser.getfloat("evaluation", "oks_threshold", fallback=0.5),
        oks_kappa=parser.getfloat("evaluation", "oks_kappa", fallback=0.05),
        output_dir=output_dir,
        threads=threads,
        ascii_ply=parser.getboolean("output", "ascii_ply", fallback=False),
    )
