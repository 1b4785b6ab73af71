"""Readers and writers for every on-disk artifact the pipeline touches.

Formats:
    Pose annotations   ``<stem>.txt``: one detection per line,
                       ``class cx cy w h x1 y1 v1 x2 y2 v2 [conf]``,
                       whitespace-separated, normalized to [0, 1].
                       11 fields = ground truth (confidence 1.0),
                       12 fields = prediction with trailing confidence.
    Depth rasters      ``<stem>.png``: 16-bit single-channel, value = millimeters;
                       ``<stem>.pfm``: float32 grayscale, declared relative convention.
                       Value 0 is the no-data marker in every convention.
    Length truth       UTF-8 CSV with header exactly ``image_id,fruit_id,length_mm``.
    Split manifest     text lines ``<image_id> <train|val|test>``.
    Point clouds       PLY 1.0, ascii or binary_little_endian, float32 vertices
                       with optional uchar RGB.
    Intrinsics         JSON with fx, fy, cx, cy, width, height.

The annotation grammar is the normalized center-format box plus two keypoint
triplets (calyx first, then peduncle); labeling-tool export formats vary, and
this grammar is the one the pipeline defines.
"""

from __future__ import annotations

import json
import csv
import io
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .camera_geometry import CameraIntrinsics
from .errors import (
    DepthFormatError,
    DimensionError,
    DuplicateKeyError,
    InvalidArgumentError,
    PlyWriteError,
    PoseParseError,
    RowValueError,
    SchemaError,
)

GROUND_TRUTH_HEADER = ["image_id", "fruit_id", "length_mm"]
SPLIT_NAMES = ("train", "val", "test")


class Visibility(IntEnum):
    NOT_LABELED = 0
    LABELED_OCCLUDED = 1
    LABELED_VISIBLE = 2


class DepthConvention(str, Enum):
    METRIC_METERS = "metric-meters"
    RELATIVE_DEPTH = "relative-depth"
    RELATIVE_INVERSE_DEPTH = "relative-inverse-depth"


@dataclass(frozen=True)
class BBox:
    """Center-format box, normalized to [0, 1] of the image dimensions."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidArgumentError(f"box must have positive extent, got w={self.w}, h={self.h}")

    def clamped(self) -> "BBox":
        """Clamp the box extents to [0, 1]; boxes already inside pass through unchanged."""
        x1, x2 = self.cx - self.w / 2.0, self.cx + self.w / 2.0
        y1, y2 = self.cy - self.h / 2.0, self.cy + self.h / 2.0
        if x1 >= 0.0 and y1 >= 0.0 and x2 <= 1.0 and y2 <= 1.0:
            return self
        x1, x2 = max(0.0, x1), min(1.0, x2)
        y1, y2 = max(0.0, y1), min(1.0, y2)
        return BBox(cx=(x1 + x2) / 2.0, cy=(y1 + y2) / 2.0, w=x2 - x1, h=y2 - y1)

    def center_px(self, width: int, height: int) -> tuple[float, float]:
        return self.cx * width, self.cy * height


@dataclass(frozen=True)
class Keypoint:
    """Normalized keypoint with a labeling-state flag.

    When visibility is NOT_LABELED the coordinates carry no information and
    every consumer must ignore them.
    """

    x: float
    y: float
    visibility: Visibility


@dataclass(frozen=True)
class PoseDetection:
    """One detected (or annotated) fruit: box, confidence, calyx and peduncle."""

    image_id: str
    bbox: BBox
    confidence: float
    calyx: Keypoint
    peduncle: Keypoint

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidArgumentError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth raster; semantics of the values depend on `convention`."""

    width: int
    height: int
    values: np.ndarray  # (height, width) float32, 0 = no data
    convention: DepthConvention

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise DimensionError(
                f"raster shape {self.values.shape} does not match {self.height}x{self.width}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DepthFormatError("depth raster contains non-finite values")
        if np.any(self.values < 0):
            raise DepthFormatError("depth raster contains negative values")

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class GroundTruthLength:
    """Caliper-measured major-axis length for one fruit in one image."""

    image_id: str
    fruit_id: str
    length_mm: float

    def __post_init__(self):
        if not self.length_mm > 0:
            raise InvalidArgumentError(f"length must be positive, got {self.length_mm}")


@dataclass(frozen=True)
class PointCloud:
    """Camera-frame points in meters, float32, with optional per-point RGB."""

    points: np.ndarray  # (N, 3) float32
    colors: Optional[np.ndarray] = None  # (N, 3) uint8

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DimensionError(f"points must be (N, 3), got {self.points.shape}")
        if self.points.dtype != np.float32:
            object.__setattr__(self, "points", self.points.astype(np.float32))
        if self.colors is not None:
            if self.colors.shape != self.points.shape:
                raise DimensionError(
                    f"colors shape {self.colors.shape} does not match points {self.points.shape}"
                )
            if self.colors.dtype != np.uint8:
                object.__setattr__(self, "colors", self.colors.astype(np.uint8))

    def __len__(self) -> int:
        return self.points.shape[0]


# --- pose annotation files ---------------------------------------------------

def _parse_pose_line(line: str, line_number: int, image_id: str) -> PoseDetection:
    fields = line.split()
    if len(fields) not in (11, 12):
        raise PoseParseError(f"expected 11 or 12 fields, got {len(fields)}", line_number)
    try:
        numbers = [float(f) for f in fields]
    except ValueError:
        raise PoseParseError(f"non-numeric field in {line!r}", line_number) from None
    if numbers[0] != 0:
        raise PoseParseError(f"unknown class id {fields[0]} (only class 0 exists)", line_number)

    cx, cy, w, h = numbers[1:5]
    kp_values = numbers[5:11]
    confidence = numbers[11] if len(numbers) == 12 else 1.0

    for name, value in [("cx", cx), ("cy", cy), ("w", w), ("h", h), ("confidence", confidence),
                        ("x1", kp_values[0]), ("y1", kp_values[1]),
                        ("x2", kp_values[3]), ("y2", kp_values[4])]:
        if not (0.0 <= value <= 1.0):
            raise PoseParseError(f"{name}={value} outside [0, 1]", line_number)
    keypoints = []
    for x, y, v in (kp_values[0:3], kp_values[3:6]):
        if v not in (0.0, 1.0, 2.0):
            raise PoseParseError(f"visibility must be 0, 1 or 2, got {v}", line_number)
        keypoints.append(Keypoint(x=x, y=y, visibility=Visibility(int(v))))

    try:
        bbox = BBox(cx=cx, cy=cy, w=w, h=h).clamped()
    except InvalidArgumentError as exc:
        raise PoseParseError(str(exc), line_number) from None
    return PoseDetection(
        image_id=image_id, bbox=bbox, confidence=confidence,
        calyx=keypoints[0], peduncle=keypoints[1],
    )


def parse_pose_file(text: str, image_id: str = "") -> list[PoseDetection]:
    """Parse one pose annotation/prediction file into detections.

    Empty lines are skipped; any malformed line raises PoseParseError with its
    1-based line number.
    """
    detections = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        detections.append(_parse_pose_line(line, line_number, image_id))
    return detections


def format_pose_file(detections: list[PoseDetection], include_confidence: bool = False) -> str:
    """Serialize detections back to the annotation grammar.

    Floats are written with repr so that parse(format(x)) round-trips exactly.
    """
    lines = []
    for det in detections:
        parts = ["0", repr(det.bbox.cx), repr(det.bbox.cy), repr(det.bbox.w), repr(det.bbox.h)]
        for kp in (det.calyx, det.peduncle):
            parts += [repr(kp.x), repr(kp.y), str(int(kp.visibility))]
        if include_confidence:
            parts.append(repr(det.confidence))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


# --- depth rasters ------------------------------------------------------------

def load_depth(
    path: str | Path,
    convention: DepthConvention,
    expected_size: Optional[tuple[int, int]] = None,
) -> DepthMap:
    """Load a depth raster from a 16-bit PNG (millimeters) or a float32 PFM.

    PNG values are divided by 1000 into meters and always carry the
    metric-meters convention; passing a relative convention for a PNG is an
    error. PFM rasters keep their raw values under the declared convention and
    are returned top-down regardless of the file's row order. `expected_size`
    is (width, height) and is checked when given.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        if convention is not DepthConvention.METRIC_METERS:
            raise DepthFormatError(
                f"16-bit PNG depth is always metric-meters, not {convention.value}"
            )
        values = _load_depth_png(path)
    elif suffix == ".pfm":
        if convention is DepthConvention.METRIC_METERS:
            raise DepthFormatError("PFM depth carries relative conventions, not metric-meters")
        values = _load_pfm(path)
    else:
        raise DepthFormatError(f"unsupported depth file type {suffix!r}")

    height, width = values.shape
    if expected_size is not None and (width, height) != tuple(expected_size):
        raise DimensionError(
            f"{path.name}: got {width}x{height}, expected {expected_size[0]}x{expected_size[1]}"
        )
    return DepthMap(width=width, height=height, values=values, convention=convention)


def _load_depth_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I"):
            raise DepthFormatError(
                f"{path.name}: expected 16-bit single-channel PNG, got mode {img.mode!r}"
            )
        raw = np.asarray(img)
    if raw.ndim != 2:
        raise DepthFormatError(f"{path.name}: expected single channel, got shape {raw.shape}")
    if raw.min() < 0 or raw.max() > 0xFFFF:
        raise DepthFormatError(f"{path.name}: values exceed 16-bit range")
    return (raw.astype(np.float32)) / 1000.0


def write_depth_png(depth: DepthMap, path: str | Path) -> None:
    """Write a metric depth map as a 16-bit PNG in millimeters."""
    if depth.convention is not DepthConvention.METRIC_METERS:
        raise DepthFormatError("only metric-meters maps can be written as millimeter PNG")
    mm = np.round(depth.values * 1000.0)
    if mm.max() > 0xFFFF:
        raise DepthFormatError("depth exceeds 65.535 m, not representable in 16-bit millimeters")
    Image.fromarray(mm.astype(np.uint16)).save(Path(path), format="PNG")


def _load_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            raise DepthFormatError(f"{path.name}: color PFM is not a depth raster")
        if header != b"Pf":
            raise DepthFormatError(f"{path.name}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DepthFormatError(f"{path.name}: malformed PFM dimensions line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        payload = f.read(width * height * 4)
    if len(payload) != width * height * 4:
        raise DepthFormatError(f"{path.name}: truncated PFM payload")
    values = np.frombuffer(payload, dtype=endian + "f4").reshape(height, width)
    # PFM stores rows bottom-up; normalize to top-down.
    values = np.flipud(values).astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise DepthFormatError(f"{path.name}: non-finite depth values")
    if values.min() < 0:
        raise DepthFormatError(f"{path.name}: negative depth values")
    return values


def write_pfm(values: np.ndarray, path: str | Path) -> None:
    """Write a float32 grayscale PFM (little-endian, bottom-up rows)."""
    if values.ndim != 2:
        raise DimensionError(f"PFM payload must be 2D, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(values).astype("<f4").tobytes())


# --- ground-truth lengths -----------------------------------------------------

def parse_ground_truth(path: str | Path) -> list[GroundTruthLength]:
    """Parse the caliper-measurement CSV, enforcing schema and uniqueness."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_ground_truth_text(f.read())


def parse_ground_truth_text(text: str) -> list[GroundTruthLength]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty ground-truth CSV") from None
    if header != GROUND_TRUTH_HEADER:
        raise SchemaError(f"header must be {','.join(GROUND_TRUTH_HEADER)!r}, got {','.join(header)!r}")
    records = []
    seen: set[tuple[str, str]] = set()
    for row_number, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != 3:
            raise RowValueError(f"expected 3 columns, got {len(row)}", row_number)
        image_id, fruit_id, length_text = row
        try:
            length_mm = float(length_text)
        except ValueError:
            raise RowValueError(f"length_mm {length_text!r} is not a number", row_number) from None
        if not length_mm > 0:
            raise RowValueError(f"length_mm must be positive, got {length_mm}", row_number)
        key = (image_id, fruit_id)
        if key in seen:
            raise DuplicateKeyError(f"duplicate (image_id, fruit_id) pair {key}")
        seen.add(key)
        records.append(GroundTruthLength(image_id=image_id, fruit_id=fruit_id, length_mm=length_mm))
    return records


def format_ground_truth(records: list[GroundTruthLength]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(GROUND_TRUTH_HEADER)
    for rec in records:
        writer.writerow([rec.image_id, rec.fruit_id, repr(rec.length_mm)])
    return out.getvalue()


# --- split manifest -----------------------------------------------------------

def load_split_manifest(path: str | Path) -> dict[str, str]:
    """Load `<image_id> <train|val|test>` lines into an id -> split mapping.

    The mapping is a partition by construction: a duplicated image id is an
    error rather than a silent overwrite.
    """
    assignment: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SchemaError(f"line {line_number}: expected '<image_id> <split>', got {line.strip()!r}")
            image_id, split = parts
            if split not in SPLIT_NAMES:
                raise SchemaError(f"line {line_number}: unknown split {split!r}")
            if image_id in assignment:
                raise DuplicateKeyError(f"line {line_number}: image id {image_id!r} assigned twice")
            assignment[image_id] = split
    return assignment


# --- intrinsics override file ---------------------------------------------------

def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    """Load explicit pinhole parameters from JSON, overriding FOV-derived ones."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    missing = {"fx", "fy", "cx", "cy", "width", "height"} - set(data)
    if missing:
        raise SchemaError(f"intrinsics file missing keys: {sorted(missing)}")
    return CameraIntrinsics(
        fx=float(data["fx"]), fy=float(data["fy"]),
        cx=float(data["cx"]), cy=float(data["cy"]),
        width=int(data["width"]), height=int(data["height"]),
    )


# --- PLY point clouds -----------------------------------------------------------

def _ascii_float(value: np.float32) -> str:
    return np.format_float_positional(value, trim="-")


def write_ply(cloud: PointCloud, path: str | Path, format: str = "binary-little-endian") -> None:
    """Write a PLY 1.0 file; binary mode preserves float32 payloads bit-for-bit."""
    if format not in ("ascii", "binary-little-endian"):
        raise InvalidArgumentError(f"unknown PLY format {format!r}")
    has_colors = cloud.colors is not None
    header_lines = [
        "ply",
        "format ascii 1.0" if format == "ascii" else "format binary_little_endian 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_colors:
        header_lines += ["property uchar red", "property uchar green", "property uchar blue"]
    header_lines.append("end_header")
    header = "\n".join(header_lines) + "\n"

    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            if format == "ascii":
                for i in range(len(cloud)):
                    parts = [_ascii_float(v) for v in cloud.points[i]]
                    if has_colors:
                        parts += [str(int(c)) for c in cloud.colors[i]]
                    f.write((" ".join(parts) + "\n").encode("ascii"))
            else:
                if has_colors:
                    record = np.empty(
                        len(cloud),
                        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                               ("red", "u1"), ("green", "u1"), ("blue", "u1")],
                    )
                    record["red"] = cloud.colors[:, 0]
                    record["green"] = cloud.colors[:, 1]
                    record["blue"] = cloud.colors[:, 2]
                else:
                    record = np.empty(len(cloud), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4")])
                record["x"] = cloud.points[:, 0]
                record["y"] = cloud.points[:, 1]
                record["z"] = cloud.points[:, 2]
                f.write(record.tobytes())
    except OSError as exc:
        raise PlyWriteError(f"failed to write {path}: {exc}") from exc


def read_ply(path: str | Path) -> PointCloud:
    """Read a PLY file written by write_ply (float32 xyz, optional uchar RGB)."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"ply":
            raise SchemaError(f"{path}: not a PLY file")
        fmt = None
        count = None
        properties: list[str] = []
        while True:
            line = f.readline()
            if not line:
                raise SchemaError(f"{path}: unterminated PLY header")
            tokens = line.strip().decode("ascii").split()
            if not tokens:
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                if tokens[1] != "vertex":
                    raise SchemaError(f"{path}: unsupported element {tokens[1]!r}")
                count = int(tokens[2])
            elif tokens[0] == "property":
                properties.append(tokens[2])
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian") or count is None:
            raise SchemaError(f"{path}: unsupported PLY layout")
        if properties[:3] != ["x", "y", "z"]:
            raise SchemaError(f"{path}: vertex layout must start with x, y, z")
        has_colors = properties[3:6] == ["red", "green", "blue"]

        if fmt == "ascii":
            points = np.zeros((count, 3), dtype=np.float32)
            colors = np.zeros((count, 3), dtype=np.uint8) if has_colors else None
            for i in range(count):
                parts = f.readline().split()
                points[i] = [np.float32(p) for p in parts[:3]]
                if has_colors:
                    colors[i] = [int(p) for p in parts[3:6]]
        else:
            dtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
            if has_colors:
                dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            record = np.frombuffer(f.read(count * struct.calcsize("<3f" + ("3B" if has_colors else ""))),
                                   dtype=dtype, count=count)
            points = np.stack([record["x"], record["y"], record["z"]], axis=1)
            colors = (np.stack([record["red"], record["green"], record["blue"]], axis=1)
                      if has_colors else None)
    return PointCloud(points=points, colors=colors)
