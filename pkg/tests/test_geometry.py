import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aansim import geometry
from aansim.geometry import (
    BoundingBox,
    CameraIntrinsics,
    DepthImage,
    EmptyBox,
    NonPositiveDepth,
    OutOfBounds,
    BehindCamera,
    DegeneratePatch,
    PointCloud,
    RigidTransform,
    ZeroDirection,
)

INTR = CameraIntrinsics(fx=130.0, fy=130.0, cx=79.5, cy=59.5, width=160, height=120)


# ---------------------------------------------------------------------------
# Back-projection / projection


def test_backproject_known_point():
    x, y, z = geometry.backproject(100, 70, 2.0, INTR)
    assert x == pytest.approx((100 - 79.5) * 2.0 / 130.0, abs=1e-15)
    assert y == pytest.approx((70 - 59.5) * 2.0 / 130.0, abs=1e-15)
    assert z == 2.0


def test_backproject_rejects_bad_inputs():
    with pytest.raises(NonPositiveDepth):
        geometry.backproject(10, 10, 0.0, INTR)
    with pytest.raises(NonPositiveDepth):
        geometry.backproject(10, 10, -1.0, INTR)
    with pytest.raises(OutOfBounds):
        geometry.backproject(160, 10, 1.0, INTR)
    with pytest.raises(OutOfBounds):
        geometry.backproject(-1, 10, 1.0, INTR)


def test_project_rejects_points_behind_camera():
    with pytest.raises(BehindCamera):
        geometry.project((0.1, 0.1, 0.0), INTR)
    with pytest.raises(BehindCamera):
        geometry.project((0.1, 0.1, -2.0), INTR)


def test_project_backproject_round_trip_bulk():
    rng = np.random.default_rng(20240811)
    n = 10_000
    us = rng.integers(0, INTR.width, n)
    vs = rng.integers(0, INTR.height, n)
    zs = rng.uniform(0.05, 10.0, n)
    pts = geometry.backproject_pixels(np.column_stack([us, vs]), zs, INTR)
    for k in range(n):
        u, v = geometry.project(pts[k], INTR)
        assert abs(u - us[k]) <= 1e-9
        assert abs(v - vs[k]) <= 1e-9


@given(
    u=st.integers(0, 159),
    v=st.integers(0, 119),
    z=st.floats(1e-3, 50.0, allow_nan=False),
)
def test_round_trip_property(u, v, z):
    point = geometry.backproject(u, v, z, INTR)
    uu, vv = geometry.project(point, INTR)
    assert math.isclose(uu, u, abs_tol=1e-9)
    assert math.isclose(vv, v, abs_tol=1e-9)


# ---------------------------------------------------------------------------
# Foreground extraction


def _depth_with_blob(background=3.0, blob=1.0):
    d = np.full((40, 50), background)
    d[15:25, 20:30] = blob  # 10x10 blob
    return d


def test_extract_foreground_band_and_component():
    depth = DepthImage(_depth_with_blob())
    box = BoundingBox(19, 14, 30, 25)  # blob-dominant, with a background rim
    mask = geometry.extract_foreground(depth, box, band_halfwidth=0.15)
    assert mask.z_m == pytest.approx(1.0)
    assert mask.pixels == {(u, v) for v in range(15, 25) for u in range(20, 30)}
    assert not mask.center_fallback


def test_extract_foreground_lower_median():
    # Even count of valid pixels: the lower of the two middle values is used.
    d = np.zeros((1, 4))
    d[0] = [1.0, 2.0, 3.0, 4.0]
    mask = geometry.extract_foreground(
        DepthImage(d), BoundingBox(0, 0, 3, 0), band_halfwidth=0.5
    )
    assert mask.z_m == 2.0


def test_extract_foreground_center_fallback():
    # Center pixel is invalid (0), so the largest in-band component wins.
    d = _depth_with_blob()
    d[19:21, 24:26] = 0.0  # punch out the box center
    box = BoundingBox(20, 15, 29, 24)  # centered on the blob
    mask = geometry.extract_foreground(DepthImage(d), box)
    assert mask.center_fallback
    assert len(mask.pixels) == 100 - 4


def test_extract_foreground_center_component_wins():
    d = np.zeros((21, 41))  # invalid background
    d[8:13, 16:25] = 1.0  # center blob, contains box center (20, 10)
    d[1:20, 30:40] = 1.1  # bigger blob in the same band
    box = BoundingBox(0, 0, 40, 20)
    mask = geometry.extract_foreground(DepthImage(d), box, band_halfwidth=0.5)
    assert not mask.center_fallback
    assert mask.pixels == {(u, v) for v in range(8, 13) for u in range(16, 25)}


def test_extract_foreground_empty_box():
    with pytest.raises(EmptyBox):
        geometry.extract_foreground(
            DepthImage(np.zeros((10, 10))), BoundingBox(2, 2, 7, 7)
        )


def test_foreground_connectivity_is_4_not_8():
    # Two diagonal pixels must land in different components.
    d = np.zeros((5, 5))
    d[2, 2] = 1.0
    d[3, 3] = 1.0
    mask = geometry.extract_foreground(
        DepthImage(d), BoundingBox(0, 0, 4, 4), band_halfwidth=0.5
    )
    assert mask.pixels == {(2, 2)}


# ---------------------------------------------------------------------------
# Plane fitting


def _plane_cloud(normal, offset, n=400, extent=0.5, seed=3, noise=0.0):
    rng = np.random.default_rng(seed)
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    # Orthonormal in-plane basis.
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    b1 = np.cross(normal, helper)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(normal, b1)
    uv = rng.uniform(-extent, extent, (n, 2))
    pts = -offset * normal + uv[:, :1] * b1 + uv[:, 1:] * b2
    if noise > 0.0:
        pts = pts + rng.normal(0.0, noise, (n, 1)) * normal
    return PointCloud(points=pts, frame="base")


def _angle_between(a, b):
    d = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.degrees(math.acos(min(1.0, d)))


def test_fit_plane_noiseless_exact():
    true_n = np.array([0.2, -0.4, 0.89])
    cloud = _plane_cloud(true_n, offset=-1.3)
    fit = geometry.fit_plane(cloud)
    assert _angle_between(fit.normal, true_n) < 1e-6
    assert fit.residual_rms < 1e-9


def test_fit_plane_with_noise_within_two_degrees():
    true_n = np.array([0.1, 0.9, 0.2])
    cloud = _plane_cloud(true_n, offset=0.7, noise=0.005, n=800)
    fit = geometry.fit_plane(cloud)
    assert _angle_between(fit.normal, true_n) < 2.0
    assert fit.residual_rms == pytest.approx(0.005, rel=0.25)


def test_fit_plane_orients_toward_camera():
    cloud = _plane_cloud([0.0, 0.0, 1.0], offset=-2.0)
    fit = geometry.fit_plane(cloud, camera_axis=(0.0, 0.0, 1.0))
    # normal . axis must be negative: the plane faces the camera.
    assert float(fit.normal @ np.array([0.0, 0.0, 1.0])) < 0.0


def test_fit_plane_population_covariance():
    # Hand-checkable 4-point square in the XY plane.
    pts = np.array(
        [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]
    )
    fit = geometry.fit_plane(PointCloud(points=pts, frame="base"))
    assert abs(fit.normal[2]) == pytest.approx(1.0, abs=1e-12)
    assert fit.offset == pytest.approx(0.0, abs=1e-12)


def test_fit_plane_degenerate_inputs():
    line = PointCloud(
        points=np.outer(np.linspace(0, 1, 10), np.array([1.0, 2.0, 3.0])), frame="base"
    )
    with pytest.raises(DegeneratePatch):
        geometry.fit_plane(line)
    with pytest.raises(DegeneratePatch):
        geometry.fit_plane(PointCloud(points=np.zeros((2, 3)), frame="base"))


def test_centroid_patch_rejects_outliers():
    rng = np.random.default_rng(11)
    core = rng.normal(0.0, 0.02, (200, 3))
    outlier = np.array([[5.0, 5.0, 5.0]])
    cloud = PointCloud(points=np.vstack([core, outlier]), frame="base")
    patch = geometry.centroid_patch(cloud, radius_scale=2.0)
    # The far point sits many RMS radii out and must be dropped.
    assert len(patch) <= 200
    assert np.linalg.norm(patch.points, axis=1).max() < 1.0


# ---------------------------------------------------------------------------
# Rigid transforms


def test_rigid_transform_validates_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))
    reflect = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        RigidTransform(reflect, np.zeros(3))


@given(
    yaw1=st.floats(-math.pi, math.pi),
    yaw2=st.floats(-math.pi, math.pi),
    tx=st.floats(-5, 5),
    ty=st.floats(-5, 5),
)
def test_compose_inverse_round_trip(yaw1, yaw2, tx, ty):
    a = RigidTransform.from_yaw(yaw1, (tx, ty, 0.3))
    b = RigidTransform.from_yaw(yaw2, (0.1, -0.2, 0.0))
    ab = a.compose(b)
    pts = np.array([[0.3, -0.7, 1.1], [0.0, 0.0, 0.0]])
    direct = ab.apply(pts)
    nested = a.apply(b.apply(pts))
    assert np.allclose(direct, nested, atol=1e-12)
    back = ab.inverse().apply(direct)
    assert np.allclose(back, pts, atol=1e-9)


# ---------------------------------------------------------------------------
# Angles and pointing


def test_normalize_angle_range_and_values():
    assert geometry.normalize_angle(0.0) == 0.0
    assert geometry.normalize_angle(math.pi) == pytest.approx(math.pi)
    assert geometry.normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert geometry.normalize_angle(3 * math.pi) == pytest.approx(math.pi)
    assert geometry.normalize_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-100.0, 100.0))
def test_normalize_angle_property(angle):
    w = geometry.normalize_angle(angle)
    assert -math.pi < w <= math.pi
    # Equivalent modulo 2*pi.
    assert math.isclose(math.cos(w), math.cos(angle), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(angle), abs_tol=1e-9)


def test_pointing_angles_oracle_values():
    cmd = geometry.pointing_angles((1.0, 1.0, 0.8 + math.sqrt(2.0)), (0.0, 0.0, 0.8))
    assert cmd.yaw == pytest.approx(math.pi / 4, abs=1e-9)
    assert cmd.pitch == pytest.approx(math.pi / 4, abs=1e-9)

    cmd = geometry.pointing_angles((0.0, -2.0, 0.8), (0.0, 0.0, 0.8))
    assert cmd.yaw == pytest.approx(-math.pi / 2, abs=1e-9)
    assert cmd.pitch == pytest.approx(0.0, abs=1e-9)


@given(
    dx=st.floats(-3, 3),
    dy=st.floats(-3, 3),
    dz=st.floats(-2, 2),
)
def test_pointing_angles_match_direct_formula(dx, dy, dz):
    origin = np.array([0.2, -0.1, 0.8])
    target = origin + np.array([dx, dy, dz])
    ex, ey, ez = target - origin  # effective delta after float rounding
    norm = math.sqrt(ex * ex + ey * ey + ez * ez)
    if norm < 1e-6:
        return
    cmd = geometry.pointing_angles(target, origin)
    assert cmd.yaw == pytest.approx(math.atan2(ey, ex), abs=1e-9)
    assert cmd.pitch == pytest.approx(math.atan2(ez, math.hypot(ex, ey)), abs=1e-9)
    assert np.allclose(cmd.direction * norm, [ex, ey, ez], atol=1e-9)


def test_pointing_angles_zero_direction():
    with pytest.raises(ZeroDirection):
        geometry.pointing_angles((0.0, 0.0, 0.8), (0.0, 0.0, 0.8))


# ---------------------------------------------------------------------------
# Full localization pipeline


def test_localize_target_synthetic_wall_patch():
    # A flat wall 2 m ahead filling the box; camera level with the base.
    depth = DepthImage(np.full((120, 160), 2.0))
    box = BoundingBox(60, 40, 100, 80)
    base_from_cam = RigidTransform(
        np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
        np.array([0.0, 0.0, 1.0]),
    )
    est = geometry.localize_target(depth, box, INTR, base_from_cam)
    # Target: straight ahead 2 m, about camera height.
    assert est.target_base[0] == pytest.approx(2.0, abs=1e-6)
    assert abs(est.target_base[1]) < 0.05
    assert est.plane is not None
    # Wall normal faces back toward the robot (-X in base frame).
    assert est.plane.normal[0] == pytest.approx(-1.0, abs=1e-6)
    assert not est.mask.center_fallback
