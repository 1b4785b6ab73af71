"""Metric 3D reconstruction and fruitlet length measurement toolkit."""

from .camera_geometry import CameraIntrinsics, Point3, backproject, intrinsics_from_fov, project
from .dataset_io import (
    BBox,
    DepthConvention,
    DepthMap,
    GroundTruthLength,
    Keypoint,
    PointCloud,
    PoseDetection,
    Visibility,
    load_depth,
    load_intrinsics,
    load_split_manifest,
    parse_ground_truth,
    parse_pose_file,
    read_ply,
    write_ply,
)
from .depth_reconstruction import (
    RangeFilter,
    ScaleAlignment,
    depth_to_cloud,
    fit_scale,
    fixed_distance_alignment,
    to_metric,
)
from .evaluation import (
    LengthErrorStats,
    LengthRecord,
    MatchResult,
    PRCurve,
    average_precision_50,
    evaluate_detections,
    iou,
    length_error_stats,
    match_detections,
    pose_average_precision_50,
    pose_correctness,
    precision_recall,
)
from .inference_adapter import BackendConfig, PhaseTiming, detect_pose, estimate_depth, mean_phase_timing
from .pose_measurement import MeasuredPose, match_to_ground_truth, measure_length, sample_keypoint_depth

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BackendConfig",
    "CameraIntrinsics",
    "DepthConvention",
    "DepthMap",
    "GroundTruthLength",
    "Keypoint",
    "LengthErrorStats",
    "LengthRecord",
    "MatchResult",
    "MeasuredPose",
    "PRCurve",
    "PhaseTiming",
    "Point3",
    "PointCloud",
    "PoseDetection",
    "RangeFilter",
    "ScaleAlignment",
    "Visibility",
    "average_precision_50",
    "backproject",
    "depth_to_cloud",
    "detect_pose",
    "estimate_depth",
    "evaluate_detections",
    "fit_scale",
    "fixed_distance_alignment",
    "intrinsics_from_fov",
    "iou",
    "length_error_stats",
    "load_depth",
    "load_intrinsics",
    "load_split_manifest",
    "match_detections",
    "match_to_ground_truth",
    "mean_phase_timing",
    "measure_length",
    "parse_ground_truth",
    "parse_pose_file",
    "pose_average_precision_50",
    "pose_correctness",
    "precision_recall",
    "project",
    "read_ply",
    "sample_keypoint_depth",
    "to_metric",
    "write_ply",
]
