"""Uniform access to pose-detection and depth producers, with phase timing.

Two backend kinds exist:

  file-oracle  replays precomputed outputs from ``<pred_dir>/<image_id>.txt``
               (pose) and ``<pred_dir>/<image_id>.pfm|png`` (depth). This is
               the canonical test backend: the whole pipeline runs without
               any ML runtime installed.
  onnx         runs an exported model through onnxruntime. The model file
               sits next to a JSON manifest (same stem, ``.json``) declaring
               the input signature, normalization constants, and output
               layout; the adapter decodes predictions per that manifest.

Every call is timed in three phases (pre-processing, inference,
post-processing) with monotonic clocks. What counts as "pre-processing" is
not standardized anywhere; here it is decode + resize + normalize, and the
reported numbers are measurements on the current host, never comparable
across machines. Post-processing applies the confidence threshold,
non-maximum suppression (suppress at IoU strictly above the configured
threshold), and the descending-confidence sort.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset_io import (
    DepthConvention,
    DepthMap,
    PoseDetection,
    load_depth,
    parse_pose_file,
)
from .errors import BackendError, EmptyInputError, InvalidArgumentError
from .evaluation import iou

KIND_FILE_ORACLE = "file-oracle"
KIND_ONNX = "onnx"

DEFAULT_CONFIDENCE_THRESHOLD = 0.25
DEFAULT_NMS_IOU = 0.7
MIN_IMAGE_SIDE = 32

POSE_OUTPUT_FIELDS = 11  # cx cy w h conf x1 y1 v1 x2 y2 v2


@dataclass(frozen=True)
class PhaseTiming:
    """Per-image phase durations, milliseconds."""

    preprocess_ms: float
    inference_ms: float
    postprocess_ms: float

    def __post_init__(self):
        for name in ("preprocess_ms", "inference_ms", "postprocess_ms"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")

    @property
    def total_ms(self) -> float:
        return self.preprocess_ms + self.inference_ms + self.postprocess_ms


def mean_phase_timing(timings: Sequence[PhaseTiming]) -> PhaseTiming:
    """Arithmetic mean of each phase over a run."""
    if not timings:
        raise EmptyInputError("no timings to average")
    n = len(timings)
    return PhaseTiming(
        preprocess_ms=sum(t.preprocess_ms for t in timings) / n,
        inference_ms=sum(t.inference_ms for t in timings) / n,
        postprocess_ms=sum(t.postprocess_ms for t in timings) / n,
    )


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    prediction_dir: Optional[Path] = None
    model_path: Optional[Path] = None
    input_size: int = 640
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    iou_nms_threshold: float = DEFAULT_NMS_IOU
    depth_convention: DepthConvention = DepthConvention.RELATIVE_INVERSE_DEPTH

    def __post_init__(self):
        if self.kind not in (KIND_FILE_ORACLE, KIND_ONNX):
            raise InvalidArgumentError(f"unknown backend kind {self.kind!r}")
        for name in ("confidence_threshold", "iou_nms_threshold"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InvalidArgumentError(f"{name} must be in [0, 1], got {value}")
        if self.kind == KIND_FILE_ORACLE:
            if self.prediction_dir is None or not Path(self.prediction_dir).is_dir():
                raise InvalidArgumentError(f"prediction_dir {self.prediction_dir} does not exist")
        else:
            if self.model_path is None or not Path(self.model_path).is_file():
                raise InvalidArgumentError(f"model_path {self.model_path} does not exist")


def _check_image(image: Optional[np.ndarray], image_id: str) -> None:
    if image is None:
        return
    if image.ndim < 2 or image.shape[0] < MIN_IMAGE_SIDE or image.shape[1] < MIN_IMAGE_SIDE:
        raise BackendError(f"image smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}", image_id)


def nms(detections: list[PoseDetection], iou_threshold: float) -> list[PoseDetection]:
    """Greedy non-maximum suppression; keeps highest-confidence boxes first."""
    ordered = sorted(detections, key=lambda d: -d.confidence)
    kept: list[PoseDetection] = []
    for det in ordered:
        if all(iou(det.bbox, other.bbox) <= iou_threshold for other in kept):
            kept.append(det)
    return kept


def _postprocess(detections: list[PoseDetection], cfg: BackendConfig) -> list[PoseDetection]:
    survivors = [d for d in detections if d.confidence >= cfg.confidence_threshold]
    survivors = nms(survivors, cfg.iou_nms_threshold)
    survivors.sort(key=lambda d: -d.confidence)
    return survivors


class FileOraclePoseBackend:
    """Replays pose predictions from per-image text files."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self.prediction_dir = Path(cfg.prediction_dir)

    def detect(self, image: Optional[np.ndarray], image_id: str) -> tuple[list[PoseDetection], PhaseTiming]:
        t0 = time.perf_counter()
        _check_image(image, image_id)
        t1 = time.perf_counter()
        path = self.prediction_dir / f"{image_id}.txt"
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise BackendError(f"cannot read prediction file {path}: {exc}", image_id) from exc
        t2 = time.perf_counter()
        detections = _postprocess(parse_pose_file(text, image_id), self.cfg)
        t3 = time.perf_counter()
        timing = PhaseTiming(
            preprocess_ms=(t1 - t0) * 1e3,
            inference_ms=(t2 - t1) * 1e3,
            postprocess_ms=(t3 - t2) * 1e3,
        )
        return detections, timing


class FileOracleDepthBackend:
    """Replays depth rasters from per-image PFM (relative) or PNG (metric) files."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self.prediction_dir = Path(cfg.prediction_dir)

    def estimate(self, image: Optional[np.ndarray], image_id: str) -> DepthMap:
        _check_image(image, image_id)
        suffix = ".png" if self.cfg.depth_convention is DepthConvention.METRIC_METERS else ".pfm"
        path = self.prediction_dir / f"{image_id}{suffix}"
        if not path.is_file():
            raise BackendError(f"missing depth prediction {path}", image_id)
        return load_depth(path, self.cfg.depth_convention)


def _load_manifest(model_path: Path) -> dict:
    manifest_path = model_path.with_suffix(".json")
    if not manifest_path.is_file():
        raise InvalidArgumentError(f"model manifest {manifest_path} not found")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    checksum = manifest.get("checksum")
    if checksum:
        digest = "sha256:" + hashlib.sha256(model_path.read_bytes()).hexdigest()
        if digest != checksum:
            raise InvalidArgumentError(f"model checksum mismatch for {model_path}")
    return manifest


class _OnnxSession:
    def __init__(self, cfg: BackendConfig):
        try:
            import onnxruntime  # noqa: PLC0415 - optional heavy dependency
        except ImportError as exc:
            raise BackendError(
                "onnxruntime is not installed; install the 'onnx' extra or use the file-oracle backend"
            ) from exc
        self.cfg = cfg
        self.model_path = Path(cfg.model_path)
        self.manifest = _load_manifest(self.model_path)
        self.session = onnxruntime.InferenceSession(
            str(self.model_path), providers=["CPUExecutionProvider"]
        )
        self.input_name = self.session.get_inputs()[0].name

    def preprocess(self, image: np.ndarray, size: int) -> np.ndarray:
        from PIL import Image

        norm = self.manifest.get("input", {}).get("normalization", {})
        scale = float(norm.get("scale", 1.0 / 255.0))
        mean = np.asarray(norm.get("mean", [0.0, 0.0, 0.0]), dtype=np.float32)
        std = np.asarray(norm.get("std", [1.0, 1.0, 1.0]), dtype=np.float32)
        resized = np.asarray(
            Image.fromarray(image).resize((size, size), Image.BILINEAR), dtype=np.float32
        )
        normalized = (resized * scale - mean) / std
        return normalized.transpose(2, 0, 1)[None].astype(np.float32)

    def run(self, batch: np.ndarray) -> np.ndarray:
        return self.session.run(None, {self.input_name: batch})[0]


class OnnxPoseBackend:
    """Runs an exported pose model; decodes rows per the manifest layout."""

    def __init__(self, cfg: BackendConfig):
        self.session = _OnnxSession(cfg)
        self.cfg = cfg
        layout = self.session.manifest.get("output", {}).get("layout")
        if layout != "pose_cxcywh_conf_kpts":
            raise InvalidArgumentError(f"unsupported pose output layout {layout!r}")

    def detect(self, image: np.ndarray, image_id: str) -> tuple[list[PoseDetection], PhaseTiming]:
        if image is None:
            raise BackendError("onnx backend requires image pixels", image_id)
        t0 = time.perf_counter()
        _check_image(image, image_id)
        batch = self.session.preprocess(image, self.cfg.input_size)
        t1 = time.perf_counter()
        try:
            raw = self.session.run(batch)
        except Exception as exc:
            raise BackendError(f"onnx inference failed: {exc}", image_id) from exc
        t2 = time.perf_counter()
        detections = _postprocess(self._decode(raw, image_id), self.cfg)
        t3 = time.perf_counter()
        timing = PhaseTiming((t1 - t0) * 1e3, (t2 - t1) * 1e3, (t3 - t2) * 1e3)
        return detections, timing

    def _decode(self, raw: np.ndarray, image_id: str) -> list[PoseDetection]:
        rows = np.asarray(raw)
        rows = rows.reshape(-1, rows.shape[-1])
        if rows.shape[-1] != POSE_OUTPUT_FIELDS:
            raise BackendError(
                f"expected {POSE_OUTPUT_FIELDS} fields per prediction row, got {rows.shape[-1]}",
                image_id,
            )
        from .dataset_io import BBox, Keypoint, Visibility

        detections = []
        for row in rows.astype(np.float64):
            cx, cy, w, h, conf, x1, y1, v1, x2, y2, v2 = row
            if w <= 0 or h <= 0:
                continue
            clip = lambda value: float(min(1.0, max(0.0, value)))
            detections.append(
                PoseDetection(
                    image_id=image_id,
                    bbox=BBox(clip(cx), clip(cy), clip(w), clip(h)).clamped(),
                    confidence=clip(conf),
                    calyx=Keypoint(clip(x1), clip(y1), Visibility(int(round(min(2.0, max(0.0, v1)))))),
                    peduncle=Keypoint(clip(x2), clip(y2), Visibility(int(round(min(2.0, max(0.0, v2)))))),
                )
            )
        return detections


class OnnxDepthBackend:
    """Runs an exported monocular depth model; output resized to image size."""

    def __init__(self, cfg: BackendConfig):
        self.session = _OnnxSession(cfg)
        self.cfg = cfg
        declared = self.session.manifest.get("output", {}).get("convention")
        self.convention = DepthConvention(declared) if declared else DepthConvention.RELATIVE_INVERSE_DEPTH

    def estimate(self, image: np.ndarray, image_id: str) -> DepthMap:
        if image is None:
            raise BackendError("onnx backend requires image pixels", image_id)
        _check_image(image, image_id)
        batch = self.session.preprocess(image, self.cfg.input_size)
        try:
            raw = self.session.run(batch)
        except Exception as exc:
            raise BackendError(f"onnx inference failed: {exc}", image_id) from exc
        values = np.asarray(raw, dtype=np.float32).squeeze()
        if values.ndim != 2:
            raise BackendError(f"depth output has shape {np.asarray(raw).shape}", image_id)
        height, width = image.shape[:2]
        if values.shape != (height, width):
            from PIL import Image

            values = np.asarray(
                Image.fromarray(values, mode="F").resize((width, height), Image.BILINEAR),
                dtype=np.float32,
            )
        # negative outputs are not representable; they become the no-data marker
        values = np.maximum(values, 0.0)
        return DepthMap(width=width, height=height, values=values, convention=self.convention)


def create_pose_backend(cfg: BackendConfig):
    return FileOraclePoseBackend(cfg) if cfg.kind == KIND_FILE_ORACLE else OnnxPoseBackend(cfg)


def create_depth_backend(cfg: BackendConfig):
    return FileOracleDepthBackend(cfg) if cfg.kind == KIND_FILE_ORACLE else OnnxDepthBackend(cfg)


def detect_pose(
    image: Optional[np.ndarray], cfg: BackendConfig, image_id: str
) -> tuple[list[PoseDetection], PhaseTiming]:
    """One-shot detection; long runs should hold a backend from create_pose_backend."""
    return create_pose_backend(cfg).detect(image, image_id)


def estimate_depth(image: Optional[np.ndarray], cfg: BackendConfig, image_id: str) -> DepthMap:
    """One-shot depth estimation; see detect_pose about backend reuse."""
    return create_depth_backend(cfg).estimate(image, image_id)
