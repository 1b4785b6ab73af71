"""Metric calyx-to-peduncle length from keypoints plus a metric depth map.

The measured quantity is the straight 3D chord between the two keypoints,
matching how a caliper measures the major axis in the field. Keypoint depth
comes from the median of a small window rather than a single pixel because
keypoints sit on fruit silhouettes where depth edges and stereo dropouts are
common; the median is robust and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .camera_geometry import CameraIntrinsics, Point3, backproject
from .dataset_io import DepthConvention, DepthMap, GroundTruthLength, PoseDetection, Visibility
from .errors import (
    ContractError,
    ConventionError,
    DegeneratePoseError,
    InsufficientDepthError,
    InvalidArgumentError,
    MissingKeypointError,
)
from .evaluation import LengthRecord

DEFAULT_SAMPLE_WINDOW = 5
MIN_VALID_WINDOW_FRACTION = 0.2


@dataclass(frozen=True)
class MeasuredPose:
    """One fruit's 3D keypoints and chord length, with sampling quality."""

    detection: PoseDetection
    calyx_3d: Point3
    peduncle_3d: Point3
    length_mm: float
    depth_sample_quality: tuple[float, float]  # valid-pixel fraction per keypoint window

    def __post_init__(self):
        if not self.length_mm > 0:
            raise InvalidArgumentError(f"length must be positive, got {self.length_mm}")


@dataclass(frozen=True)
class LengthMatch:
    """Paired and unpaired items from measured-vs-truth association."""

    records: tuple[LengthRecord, ...]
    unmatched_measured: tuple[MeasuredPose, ...]
    unmatched_truth: tuple[GroundTruthLength, ...]


def sample_keypoint_depth(
    depth: DepthMap,
    u: float,
    v: float,
    window: int = DEFAULT_SAMPLE_WINDOW,
) -> tuple[float, float]:
    """Median valid depth in a window x window neighborhood, plus valid fraction.

    The window is clipped at image borders; validity is judged against the
    clipped pixel count. Fewer than 20% valid pixels raises
    InsufficientDepthError.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidArgumentError(f"window must be odd and >= 1, got {window}")
    if not (0 <= u <= depth.width and 0 <= v <= depth.height):
        raise InvalidArgumentError(f"({u}, {v}) outside {depth.width}x{depth.height} raster")
    cu = min(depth.width - 1, max(0, int(round(u))))
    cv = min(depth.height - 1, max(0, int(round(v))))
    half = window // 2
    u0, u1 = max(0, cu - half), min(depth.width, cu + half + 1)
    v0, v1 = max(0, cv - half), min(depth.height, cv + half + 1)
    patch = depth.values[v0:v1, u0:u1]
    valid = patch[patch > 0]
    fraction = valid.size / patch.size
    if fraction < MIN_VALID_WINDOW_FRACTION:
        raise InsufficientDepthError(
            f"{valid.size}/{patch.size} valid pixels around ({u:.1f}, {v:.1f})"
        )
    return float(np.median(valid)), fraction


def measure_length(
    det: PoseDetection,
    depth: DepthMap,
    k: CameraIntrinsics,
    window: int = DEFAULT_SAMPLE_WINDOW,
) -> MeasuredPose:
    """Back-project both keypoints and return the chord between them.

    Keypoints are denormalized as u = x * width, v = y * height; depth is
    median-sampled around each. Occluded-but-labeled keypoints are measured
    like visible ones; their sampling quality is still reported so callers can
    weight or filter them.
    """
    if depth.convention is not DepthConvention.METRIC_METERS:
        raise ConventionError(f"measurement needs metric depth, got {depth.convention.value}")
    for name, kp in (("calyx", det.calyx), ("peduncle", det.peduncle)):
        if kp.visibility == Visibility.NOT_LABELED:
            raise MissingKeypointError(f"{name} keypoint is not labeled for {det.image_id!r}")

    points = []
    qualities = []
    for kp in (det.calyx, det.peduncle):
        u = kp.x * depth.width
        v = kp.y * depth.height
        depth_m, quality = sample_keypoint_depth(depth, u, v, window)
        points.append(backproject(u, v, depth_m, k))
        qualities.append(quality)

    calyx_3d, peduncle_3d = points
    length_mm = 1000.0 * math.dist(
        (calyx_3d.x, calyx_3d.y, calyx_3d.z),
        (peduncle_3d.x, peduncle_3d.y, peduncle_3d.z),
    )
    if not length_mm > 0:
        raise DegeneratePoseError(f"keypoints coincide for {det.image_id!r}")
    return MeasuredPose(
        detection=det,
        calyx_3d=calyx_3d,
        peduncle_3d=peduncle_3d,
        length_mm=length_mm,
        depth_sample_quality=(qualities[0], qualities[1]),
    )


def match_to_ground_truth(
    measured: Sequence[MeasuredPose],
    truth: Sequence[GroundTruthLength],
    image_id: str,
    method: str,
    truth_centers_px: Optional[Mapping[str, tuple[float, float]]] = None,
    image_size: Optional[tuple[int, int]] = None,
) -> LengthMatch:
    """Associate measured poses with caliper records for one image.

    When `truth_centers_px` gives a pixel anchor per fruit id (from the
    image's ground-truth annotations), pairs are chosen greedily by ascending
    distance between those anchors and the measured bbox centers, each side
    used at most once. Without anchors the fallback pairs measured poses
    sorted by bbox center against truths sorted by fruit id, in order. Both
    paths are deterministic.
    """
    for pose in measured:
        if pose.detection.image_id != image_id:
            raise ContractError(
                f"measured pose from {pose.detection.image_id!r} passed for image {image_id!r}"
            )
    for record in truth:
        if record.image_id != image_id:
            raise ContractError(f"truth record from {record.image_id!r} passed for image {image_id!r}")

    pairs: list[tuple[MeasuredPose, GroundTruthLength]] = []
    if truth_centers_px is not None:
        if image_size is None:
            raise ContractError("image_size is required when truth_centers_px is given")
        width, height = image_size
        anchored = [t for t in truth if t.fruit_id in truth_centers_px]
        candidates = []
        for i, pose in enumerate(measured):
            mu, mv = pose.detection.bbox.center_px(width, height)
            for j, record in enumerate(anchored):
                tu, tv = truth_centers_px[record.fruit_id]
                candidates.append((math.hypot(mu - tu, mv - tv), i, j))
        candidates.sort()
        used_measured: set[int] = set()
        used_truth: set[int] = set()
        for _, i, j in candidates:
            if i in used_measured or j in used_truth:
                continue
            used_measured.add(i)
            used_truth.add(j)
            pairs.append((measured[i], anchored[j]))
        leftover_measured = [m for i, m in enumerate(measured) if i not in used_measured]
        leftover_truth = [t for j, t in enumerate(anchored) if j not in used_truth]
        leftover_truth += [t for t in truth if t.fruit_id not in truth_centers_px]
    else:
        by_center = sorted(measured, key=lambda p: (p.detection.bbox.cx, p.detection.bbox.cy))
        by_id = sorted(truth, key=lambda t: t.fruit_id)
        pairs = list(zip(by_center, by_id))
        leftover_measured = by_center[len(pairs):]
        leftover_truth = by_id[len(pairs):]

    records = tuple(
        LengthRecord(
            image_id=image_id,
            fruit_id=record.fruit_id,
            predicted_mm=pose.length_mm,
            actual_mm=record.length_mm,
            method=method,
        )
        for pose, record in pairs
    )
    return LengthMatch(
        records=records,
        unmatched_measured=tuple(leftover_measured),
        unmatched_truth=tuple(leftover_truth),
    )
