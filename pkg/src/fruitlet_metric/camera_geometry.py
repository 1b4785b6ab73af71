"""Pinhole camera model: FOV-derived intrinsics and 2D<->3D mapping.

Conventions:
    Camera frame (right-handed, standard computer vision):
        x right, y down, z forward along the optical axis (meters).
        Points in front of the camera have z > 0.
    Image frame:
        u right, v down, origin at the top-left corner (pixels).

The model is a zero-distortion pinhole: the capture hardware is specified
only by field of view and resolution, so no distortion coefficients exist
to apply. fx and fy are derived independently from the horizontal and
vertical FOV (no square-pixel assumption). The principal point defaults to
the image center; explicit intrinsics files may override all parameters
(see dataset_io.load_intrinsics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BehindCameraError, InvalidArgumentError, InvalidDepthError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsic parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvalidArgumentError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Point3:
    """A point in the camera frame, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise InvalidArgumentError(f"non-finite coordinate in ({self.x}, {self.y}, {self.z})")


def intrinsics_from_fov(width: int, height: int, hfov_deg: float, vfov_deg: float) -> CameraIntrinsics:
    """Derive pinhole intrinsics from image size and field of view.

    fx = (width/2) / tan(hfov/2) and fy = (height/2) / tan(vfov/2), with the
    principal point at the image center. Angles are taken in degrees because
    camera datasheets quote them that way.
    """
    if width < 1 or height < 1:
        raise InvalidArgumentError(f"image size must be at least 1x1, got {width}x{height}")
    if not (0.0 < hfov_deg < 180.0) or not (0.0 < vfov_deg < 180.0):
        raise InvalidArgumentError(f"FOV must lie in (0, 180) degrees, got hfov={hfov_deg}, vfov={vfov_deg}")
    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    fy = (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
    return CameraIntrinsics(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def backproject(u: float, v: float, depth_m: float, k: CameraIntrinsics) -> Point3:
    """Map a pixel plus metric depth to a camera-frame point.

    Inverts the pinhole projection: x = (u - cx) * d / fx, y = (v - cy) * d / fy,
    z = d. Depth is the distance along the optical axis, not the ray length.
    """
    if not depth_m > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth_m}")
    return Point3(
        x=(u - k.cx) * depth_m / k.fx,
        y=(v - k.cy) * depth_m / k.fy,
        z=depth_m,
    )


def project(p: Point3, k: CameraIntrinsics) -> tuple[float, float]:
    """Map a camera-frame point to pixel coordinates (u, v)."""
    if not p.z > 0:
        raise BehindCameraError(f"cannot project point with z={p.z}")
    return k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy
