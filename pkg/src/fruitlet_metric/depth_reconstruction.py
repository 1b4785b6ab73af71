"""Relative-to-metric depth alignment and point-cloud synthesis.

Monocular depth transformers emit values defined only up to an affine
transform, conventionally in inverse-depth (disparity) space. To obtain
metric clouds we fit scale s and shift t by least squares against a metric
reference (the stereo camera's sparse raster of the same scene), in the
space declared by the relative map's convention, then map back to meters.
When no reference exists, a fixed-distance mode assumes the canopy plane at
a known capture distance instead (see the CLI's --align flag).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera_geometry import CameraIntrinsics
from .dataset_io import DepthConvention, DepthMap, PointCloud
from .errors import (
    ConventionError,
    DimensionError,
    InsufficientDataError,
    InvalidArgumentError,
    RankDeficientError,
    ScaleFitError,
)

MAX_SENSOR_RANGE_M = 10.0  # stereo camera's stated depth ceiling
DEFAULT_RANGE_FILTER_M = (0.15, 2.0)  # generous bracket around the 2 ft capture distance
DEFAULT_FIT_STRIDE = 4


class FitSpace:
    DEPTH = "depth"
    INVERSE_DEPTH = "inverse-depth"


def _fit_space_for(convention: DepthConvention) -> str:
    if convention is DepthConvention.RELATIVE_INVERSE_DEPTH:
        return FitSpace.INVERSE_DEPTH
    return FitSpace.DEPTH


@dataclass(frozen=True)
class ScaleAlignment:
    """Affine map s*r + t taking relative values into the fit space."""

    s: float
    t: float
    space: str  # FitSpace.DEPTH or FitSpace.INVERSE_DEPTH
    residual_rmse_m: float
    inlier_count: int

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidArgumentError(f"scale must be positive, got {self.s}")
        if self.inlier_count < 2:
            raise InvalidArgumentError(f"alignment needs >= 2 inliers, got {self.inlier_count}")
        if self.space not in (FitSpace.DEPTH, FitSpace.INVERSE_DEPTH):
            raise InvalidArgumentError(f"unknown fit space {self.space!r}")


IDENTITY_ALIGNMENT = ScaleAlignment(s=1.0, t=0.0, space=FitSpace.DEPTH,
                                    residual_rmse_m=0.0, inlier_count=2)


@dataclass(frozen=True)
class RangeFilter:
    """Metric depth bounds applied before point-cloud synthesis."""

    min_m: float
    max_m: float

    def __post_init__(self):
        if not (0 < self.min_m < self.max_m <= MAX_SENSOR_RANGE_M):
            raise InvalidArgumentError(
                f"require 0 < min < max <= {MAX_SENSOR_RANGE_M}, got ({self.min_m}, {self.max_m})"
            )


def fixed_distance_alignment(relative: DepthMap, plane_distance_m: float) -> ScaleAlignment:
    """Calibrate against an assumed constant scene distance.

    Fits the two-parameter affine map through (median relative value ->
    plane distance) with zero shift in the appropriate space. Used when no
    metric reference raster exists for the scene.
    """
    if not plane_distance_m > 0:
        raise InvalidArgumentError(f"plane distance must be positive, got {plane_distance_m}")
    valid = relative.values[relative.valid_mask]
    if valid.size < 2:
        raise InsufficientDataError(f"only {valid.size} valid pixels for fixed-distance calibration")
    median = float(np.median(valid))
    if median <= 0:
        raise RankDeficientError("median relative value is not positive")
    space = _fit_space_for(relative.convention)
    target = 1.0 / plane_distance_m if space == FitSpace.INVERSE_DEPTH else plane_distance_m
    return ScaleAlignment(s=target / median, t=0.0, space=space,
                          residual_rmse_m=0.0, inlier_count=int(valid.size))


def fit_scale(
    relative: DepthMap,
    metric_reference: DepthMap,
    sample_stride: int = DEFAULT_FIT_STRIDE,
) -> ScaleAlignment:
    """Least-squares (s, t) mapping relative values onto the metric reference.

    The fit runs in the space given by the relative map's convention: for
    inverse-depth maps the reference is inverted before fitting, and the
    reported residual RMSE is computed in meters after mapping back. Pixels
    invalid in either map are excluded; `sample_stride` subsamples the grid
    in both axes to bound the cost on full-resolution rasters.
    """
    if metric_reference.convention is not DepthConvention.METRIC_METERS:
        raise ConventionError("reference map must be metric-meters")
    if (relative.width, relative.height) != (metric_reference.width, metric_reference.height):
        raise DimensionError(
            f"relative {relative.width}x{relative.height} vs "
            f"reference {metric_reference.width}x{metric_reference.height}"
        )
    if sample_stride < 1:
        raise InvalidArgumentError(f"sample stride must be >= 1, got {sample_stride}")

    rel = relative.values[::sample_stride, ::sample_stride]
    ref = metric_reference.values[::sample_stride, ::sample_stride]
    mask = (rel > 0) & (ref > 0)
    r = rel[mask].astype(np.float64)
    m = ref[mask].astype(np.float64)
    if r.size < 2:
        raise InsufficientDataError(f"only {r.size} valid sample pairs")
    if np.ptp(r) == 0:
        raise RankDeficientError("all relative samples are equal; scale is unidentifiable")

    space = _fit_space_for(relative.convention)
    y = 1.0 / m if space == FitSpace.INVERSE_DEPTH else m

    design = np.stack([r, np.ones_like(r)], axis=1)
    (s, t), *_ = np.linalg.lstsq(design, y, rcond=None)
    if not s > 0:
        raise ScaleFitError(f"fit produced non-positive scale s={s}")

    fitted = s * r + t
    if space == FitSpace.INVERSE_DEPTH:
        positive = fitted > 0
        depths = np.full_like(fitted, np.nan)
        depths[positive] = 1.0 / fitted[positive]
        residuals = depths[positive] - m[positive]
    else:
        residuals = fitted - m
    rmse = float(np.sqrt(np.mean(residuals ** 2))) if residuals.size else float("inf")
    return ScaleAlignment(s=float(s), t=float(t), space=space,
                          residual_rmse_m=rmse, inlier_count=int(r.size))


def to_metric(relative: DepthMap, alignment: ScaleAlignment) -> DepthMap:
    """Apply an alignment, producing a metric map with out-of-range pixels invalidated.

    Depth-space alignments map d = s*r + t; inverse-depth alignments map
    d = 1 / (s*r + t). Results outside (0, 10] m, and pixels where the
    inverse mapping's denominator is non-positive, become the 0 no-data
    marker.
    """
    expected_space = _fit_space_for(relative.convention)
    if alignment.space != expected_space:
        raise ConventionError(
            f"alignment space {alignment.space!r} does not fit a {relative.convention.value} map"
        )
    values = relative.values.astype(np.float64)
    valid = values > 0
    out = np.zeros_like(values)
    if alignment.space == FitSpace.INVERSE_DEPTH:
        denom = alignment.s * values + alignment.t
        ok = valid & (denom > 0)
        out[ok] = 1.0 / denom[ok]
    else:
        out[valid] = alignment.s * values[valid] + alignment.t
    out[(out <= 0) | (out > MAX_SENSOR_RANGE_M)] = 0.0
    return DepthMap(width=relative.width, height=relative.height,
                    values=out.astype(np.float32), convention=DepthConvention.METRIC_METERS)


def depth_to_cloud(
    depth: DepthMap,
    k: CameraIntrinsics,
    range_filter: RangeFilter,
    rgb: Optional[np.ndarray] = None,
) -> PointCloud:
    """Back-project every valid in-range pixel into a camera-frame cloud.

    Points come out in row-major pixel order, one per pixel with
    min_m <= depth <= max_m, colored from the RGB raster when given. The
    vectorized arithmetic here is the same pinhole inversion as
    camera_geometry.backproject, applied per pixel.
    """
    if depth.convention is not DepthConvention.METRIC_METERS:
        raise ConventionError(f"point clouds need metric depth, got {depth.convention.value}")
    if (depth.width, depth.height) != (k.width, k.height):
        raise DimensionError(
            f"depth {depth.width}x{depth.height} does not match intrinsics {k.width}x{k.height}"
        )
    if rgb is not None and rgb.shape[:2] != (depth.height, depth.width):
        raise DimensionError(f"rgb shape {rgb.shape} does not match depth raster")

    z = depth.values.astype(np.float64)
    keep = (z >= range_filter.min_m) & (z <= range_filter.max_m) & (z > 0)
    vs, us = np.nonzero(keep)  # row-major order
    d = z[vs, us]
    x = (us - k.cx) * d / k.fx
    y = (vs - k.cy) * d / k.fy
    points = np.stack([x, y, d], axis=1).astype(np.float32)
    colors = rgb[vs, us].astype(np.uint8) if rgb is not None else None
    return PointCloud(points=points, colors=colors)
