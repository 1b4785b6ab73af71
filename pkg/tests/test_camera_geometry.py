import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fruitlet_metric.camera_geometry import (
    CameraIntrinsics,
    Point3,
    backproject,
    intrinsics_from_fov,
    project,
)
from fruitlet_metric.errors import (
    BehindCameraError,
    InvalidArgumentError,
    InvalidDepthError,
)


class TestIntrinsicsFromFov:
    def test_d435_datasheet_values(self):
        # recomputed by direct evaluation of (w/2)/tan(hfov/2), (h/2)/tan(vfov/2)
        k = intrinsics_from_fov(1280, 720, 69.4, 42.5)
        assert k.fx == pytest.approx(924.2773797459291, abs=1e-9)
        assert k.fy == pytest.approx(925.7384642369517, abs=1e-9)
        assert k.cx == 640.0
        assert k.cy == 360.0
        assert (k.width, k.height) == (1280, 720)

    def test_unit_focal_case(self):
        k = intrinsics_from_fov(2, 2, 90, 90)
        assert k.fx == pytest.approx(1.0)
        assert k.fy == pytest.approx(1.0)
        assert k.cx == 1.0 and k.cy == 1.0

    @pytest.mark.parametrize("hfov,vfov", [(0, 42.5), (69.4, 0), (180, 42.5), (-10, 42.5), (69.4, 200)])
    def test_degenerate_fov_rejected(self, hfov, vfov):
        with pytest.raises(InvalidArgumentError):
            intrinsics_from_fov(1280, 720, hfov, vfov)

    def test_zero_size_rejected(self):
        with pytest.raises(InvalidArgumentError):
            intrinsics_from_fov(0, 720, 69.4, 42.5)

    def test_monotone_in_fov(self):
        narrow = intrinsics_from_fov(1280, 720, 50, 40)
        wide = intrinsics_from_fov(1280, 720, 80, 60)
        assert wide.fx < narrow.fx
        assert wide.fy < narrow.fy


class TestIntrinsicsInvariants:
    def test_negative_focal_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(fx=-1, fy=1, cx=1, cy=1, width=2, height=2)

    def test_principal_point_outside_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(fx=1, fy=1, cx=3, cy=1, width=2, height=2)

    def test_point3_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            Point3(math.nan, 0, 1)


class TestBackproject:
    def test_principal_point_at_capture_distance(self, k_d435):
        p = backproject(k_d435.cx, k_d435.cy, 0.61, k_d435)
        assert (p.x, p.y, p.z) == (0.0, 0.0, 0.61)

    def test_one_focal_length_offset(self, k_d435):
        p = backproject(k_d435.cx + k_d435.fx, k_d435.cy, 1.0, k_d435)
        assert p.x == pytest.approx(1.0, abs=1e-12)
        assert p.y == 0.0
        assert p.z == 1.0

    def test_hand_evaluated_pixel(self, k_d435):
        # (u - cx) * d / fx and (v - cy) * d / fy at (100.5, 200.25, 0.75)
        p = backproject(100.5, 200.25, 0.75, k_d435)
        assert p.x == pytest.approx(-0.4377744266674856, abs=1e-15)
        assert p.y == pytest.approx(-0.1294237029448231, abs=1e-15)
        assert p.z == 0.75

    @pytest.mark.parametrize("depth", [0.0, -0.3])
    def test_non_positive_depth_rejected(self, k_d435, depth):
        with pytest.raises(InvalidDepthError):
            backproject(100, 100, depth, k_d435)


class TestProject:
    def test_optical_axis_hits_principal_point(self, k_d435):
        assert project(Point3(0, 0, 1), k_d435) == (k_d435.cx, k_d435.cy)

    def test_unit_offset_at_unit_depth(self):
        k = CameraIntrinsics(fx=924.3, fy=925.6, cx=640, cy=360, width=1280, height=720)
        u, v = project(Point3(1, 0, 1), k)
        assert u == pytest.approx(1564.3, abs=1e-12)
        assert v == 360.0

    def test_behind_camera_rejected(self, k_d435):
        with pytest.raises(BehindCameraError):
            project(Point3(0, 0, -1), k_d435)
        with pytest.raises(BehindCameraError):
            project(Point3(0.1, 0.1, 0.0), k_d435)


@given(
    u=st.floats(0, 1280),
    v=st.floats(0, 720),
    d=st.floats(0.1, 10, exclude_min=False),
)
def test_round_trip_identity(u, v, d):
    k = intrinsics_from_fov(1280, 720, 69.4, 42.5)
    u2, v2 = project(backproject(u, v, d, k), k)
    assert math.hypot(u2 - u, v2 - v) < 1e-6


@given(
    u=st.floats(0, 1280),
    v=st.floats(0, 720),
    d=st.floats(0.1, 5),
    alpha=st.floats(0.1, 10),
)
def test_backprojection_scales_linearly(u, v, d, alpha):
    k = intrinsics_from_fov(1280, 720, 69.4, 42.5)
    p = backproject(u, v, d, k)
    q = backproject(u, v, alpha * d, k)
    assert q.x == pytest.approx(alpha * p.x, rel=1e-12, abs=1e-15)
    assert q.y == pytest.approx(alpha * p.y, rel=1e-12, abs=1e-15)
    assert q.z == pytest.approx(alpha * p.z, rel=1e-12)
