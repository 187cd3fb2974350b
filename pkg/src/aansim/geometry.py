"""Camera geometry: depth back-projection, foreground masks, plane fits,
and deictic pointing angles.

Conventions used throughout the package:

* Pixel coordinates are (u, v) with u the column index (rightward) and v the
  row index (downward).  Depth images are indexed ``depth[v, u]``.
* The camera frame is right-handed with X right, Y down, Z along the optical
  axis.  A depth value is the Z coordinate of the nearest surface in meters;
  0 marks an invalid pixel (no return).
* The robot base frame is right-handed with X forward, Y left, Z up.
* Angles are radians everywhere inside the package; degrees appear only at
  the CLI and config boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

# Tolerance for rotation matrix orthonormality and for "zero" directions.
ROTATION_TOL = 1e-9
ZERO_DIRECTION_TOL = 1e-9

# Default half-width of the depth band kept around the median box depth when
# extracting a foreground mask, in meters.  Chosen to span a hand-held bottle
# while rejecting shelf/wall returns behind it.
DEFAULT_BAND_HALFWIDTH = 0.15

# Plane-fit patches keep mask points within this multiple of the RMS radius
# of the cloud around its centroid.
DEFAULT_PATCH_RADIUS_SCALE = 2.0


class GeometryError(Exception):
    """Base class for geometry failures."""


class NonPositiveDepth(GeometryError):
    """Back-projection was asked for a pixel with depth <= 0."""


class OutOfBounds(GeometryError):
    """Pixel coordinates fall outside the image."""


class BehindCamera(GeometryError):
    """Projection was asked for a point with Z <= 0."""


class EmptyBox(GeometryError):
    """A bounding box contains no valid depth pixels."""


class DegeneratePatch(GeometryError):
    """A plane fit was attempted on fewer than 3 points or a collinear set."""


class ZeroDirection(GeometryError):
    """A pointing direction of (near-)zero length was requested."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0.0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0.0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def contains(self, u: float, v: float) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


@dataclass
class DepthImage:
    """Per-pixel depth in meters, shape (height, width); 0 = invalid pixel."""

    depth: np.ndarray

    def __post_init__(self) -> None:
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ValueError(f"depth image must be 2-D, got shape {self.depth.shape}")
        if not np.all(np.isfinite(self.depth)):
            raise ValueError("depth image contains non-finite values")
        if np.any(self.depth < 0.0):
            raise ValueError("depth image contains negative values")

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with inclusive bounds."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int

    def __post_init__(self) -> None:
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError(f"inverted bounding box {self}")

    @property
    def center(self) -> tuple[int, int]:
        """Integer center pixel (u, v)."""
        return ((self.u_min + self.u_max) // 2, (self.v_min + self.v_max) // 2)

    @property
    def area(self) -> int:
        return (self.u_max - self.u_min + 1) * (self.v_max - self.v_min + 1)

    def clipped(self, width: int, height: int) -> "BoundingBox":
        return BoundingBox(
            max(0, min(self.u_min, width - 1)),
            max(0, min(self.v_min, height - 1)),
            max(0, min(self.u_max, width - 1)),
            max(0, min(self.v_max, height - 1)),
        )


@dataclass
class ForegroundMask:
    """Connected set of pixels kept by depth-band foreground extraction.

    ``z_m`` is the (lower) median depth of the valid pixels in the source
    box; the mask keeps pixels whose depth lies within ``band_halfwidth`` of
    it.  ``center_fallback`` is flagged when the box center pixel did not
    land in the retained component and the largest component was used
    instead.
    """

    pixels: set[tuple[int, int]]
    z_m: float
    band_halfwidth: float
    center_fallback: bool = False


@dataclass(frozen=True)
class RigidTransform:
    """Rigid transform p_out = R @ p_in + t with an orthonormal R."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tra = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        if not np.allclose(rot.T @ rot, np.eye(3), atol=ROTATION_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation about +Z by ``yaw`` plus a translation."""
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array or a single 3-vector."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)


@dataclass
class PointCloud:
    """Point set (N, 3) tagged with the frame it lives in."""

    points: np.ndarray
    frame: str
    centroid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.centroid is None:
            self.centroid = (
                self.points.mean(axis=0) if len(self.points) else np.zeros(3)
            )
        else:
            self.centroid = np.asarray(self.centroid, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class PlaneFit:
    """Plane n . p + offset = 0 with |n| = 1."""

    normal: np.ndarray
    offset: float
    residual_rms: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "normal", np.asarray(self.normal, dtype=np.float64).reshape(3)
        )


@dataclass(frozen=True)
class PointingCommand:
    """Deictic pointing: yaw/pitch of the arm ray from ``arm_origin``.

    yaw is measured in the horizontal plane from +X (atan2 range, normalized
    to (-pi, pi]); pitch is the elevation from the horizontal plane, in
    [-pi/2, pi/2].  ``direction`` is the unit vector toward the target.
    """

    yaw: float
    pitch: float
    arm_origin: np.ndarray
    direction: np.ndarray


def backproject(
    u: int, v: int, z: float, intrinsics: CameraIntrinsics
) -> tuple[float, float, float]:
    """Back-project pixel (u, v) at depth ``z`` into the camera frame.

    X = (u - cx) * z / fx, Y = (v - cy) * z / fy, Z = z.

    Raises NonPositiveDepth for z <= 0 and OutOfBounds for pixels outside
    the image.
    """
    if not intrinsics.contains(u, v):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {intrinsics.width}x{intrinsics.height}")
    if z <= 0.0:
        raise NonPositiveDepth(f"depth {z} at pixel ({u}, {v})")
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return (x, y, z)


def backproject_pixels(
    pixels: np.ndarray, depths: np.ndarray, intrinsics: CameraIntrinsics
) -> np.ndarray:
    """Vectorized back-projection of an (N, 2) array of (u, v) pixels."""
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    z = np.asarray(depths, dtype=np.float64).reshape(-1)
    if np.any(z <= 0.0):
        raise NonPositiveDepth("depth array contains values <= 0")
    x = (pix[:, 0] - intrinsics.cx) * z / intrinsics.fx
    y = (pix[:, 1] - intrinsics.cy) * z / intrinsics.fy
    return np.column_stack([x, y, z])


def project(
    point, intrinsics: CameraIntrinsics
) -> tuple[float, float]:
    """Project a camera-frame point to (possibly sub-pixel) image coordinates.

    Raises BehindCamera for points with Z <= 0.  The result may fall outside
    the image bounds; callers decide whether that matters.
    """
    x, y, z = (float(c) for c in np.asarray(point, dtype=np.float64).reshape(3))
    if z <= 0.0:
        raise BehindCamera(f"point with Z={z} cannot be projected")
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    return (u, v)


# 4-connected structuring element for component labeling.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def extract_foreground(
    depth: DepthImage,
    box: BoundingBox,
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH,
) -> ForegroundMask:
    """Segment the foreground object inside a detection box.

    Takes the (lower) median depth z_m of the valid pixels in the box, keeps
    pixels with |depth - z_m| <= band_halfwidth, and returns the 4-connected
    component containing the box center.  If the center pixel is not part of
    the retained set, falls back to the largest component and logs a warning.

    Raises EmptyBox when the box holds no valid depth pixels.
    """
    if band_halfwidth <= 0.0:
        raise ValueError(f"band_halfwidth must be positive, got {band_halfwidth}")
    clipped = box.clipped(depth.width, depth.height)
    sub = depth.depth[clipped.v_min : clipped.v_max + 1, clipped.u_min : clipped.u_max + 1]
    valid = sub > 0.0
    if not valid.any():
        raise EmptyBox(f"no valid depth pixels inside {box}")

    vals = np.sort(sub[valid], kind="stable")
    z_m = float(vals[(len(vals) - 1) // 2])  # lower median, no interpolation

    retained = valid & (np.abs(sub - z_m) <= band_halfwidth)
    labels, n_components = ndimage.label(retained, structure=_CROSS)
    if n_components == 0:
        # The median pixel itself is always within the band, so this cannot
        # happen; guard anyway.
        raise EmptyBox(f"depth band retained no pixels inside {box}")

    cu, cv = clipped.center
    center_label = int(labels[cv - clipped.v_min, cu - clipped.u_min])
    center_fallback = False
    if center_label == 0:
        sizes = ndimage.sum_labels(retained, labels, index=np.arange(1, n_components + 1))
        center_label = int(np.argmax(sizes)) + 1  # ties: lowest label wins
        center_fallback = True
        logger.warning(
            "foreground extraction: box center (%d, %d) missed the depth band; "
            "falling back to largest component (%d px)",
            cu, cv, int(sizes[center_label - 1]),
        )

    vs, us = np.nonzero(labels == center_label)
    pixels = {
        (int(u + clipped.u_min), int(v + clipped.v_min)) for u, v in zip(us, vs)
    }
    return ForegroundMask(
        pixels=pixels,
        z_m=z_m,
        band_halfwidth=band_halfwidth,
        center_fallback=center_fallback,
    )


def to_base(cloud: PointCloud, base_from_cloud: RigidTransform, frame: str = "base") -> PointCloud:
    """Transform every point (and the centroid) into the target frame."""
    pts = base_from_cloud.apply(cloud.points)
    return PointCloud(points=pts, frame=frame)


def centroid_patch(
    cloud: PointCloud, radius_scale: float = DEFAULT_PATCH_RADIUS_SCALE
) -> PointCloud:
    """Points of ``cloud`` within ``radius_scale`` x RMS radius of the centroid."""
    if len(cloud) == 0:
        return cloud
    offsets = cloud.points - cloud.centroid
    radii = np.linalg.norm(offsets, axis=1)
    rms = math.sqrt(float(np.mean(radii**2)))
    keep = radii <= radius_scale * rms + 1e-12
    return PointCloud(points=cloud.points[keep], frame=cloud.frame)


def fit_plane(patch: PointCloud, camera_axis=None) -> PlaneFit:
    """Least-squares plane through a patch via the covariance eigenvector.

    The normal is the eigenvector of the population covariance (divide by N,
    centered on the mean) with the smallest eigenvalue.  Exact eigenvalue
    ties are broken by the eigenvector with lexicographically largest
    absolute components.  When ``camera_axis`` is given the normal is
    oriented so that normal . camera_axis < 0 (facing the camera).

    Raises DegeneratePatch for fewer than 3 points or a (near-)collinear set.
    """
    pts = patch.points
    if len(pts) < 3:
        raise DegeneratePatch(f"plane fit needs >= 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues
    scale = max(float(eigvals[2]), 1e-30)
    if eigvals[1] <= 1e-12 * scale:
        raise DegeneratePatch("points are collinear or coincident")

    tie_tol = 1e-12 * max(scale, 1.0)
    tied = [i for i in range(3) if eigvals[i] - eigvals[0] <= tie_tol]
    pick = max(tied, key=lambda i: tuple(np.abs(eigvecs[:, i])))
    normal = eigvecs[:, pick]
    normal = normal / np.linalg.norm(normal)

    if camera_axis is not None:
        axis = np.asarray(camera_axis, dtype=np.float64).reshape(3)
        d = float(normal @ axis)
        if abs(d) < 1e-12:
            # Plane parallel to the viewing axis; fall back to a canonical
            # sign so the result stays deterministic.
            k = int(np.argmax(np.abs(normal)))
            if normal[k] < 0.0:
                normal = -normal
        elif d > 0.0:
            normal = -normal

    offset = -float(normal @ centroid)
    residual_rms = math.sqrt(float(np.mean((centered @ normal) ** 2)))
    return PlaneFit(normal=normal, offset=offset, residual_rms=residual_rms)


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def pointing_angles(target, arm_origin) -> PointingCommand:
    """Yaw and pitch of the ray from ``arm_origin`` to ``target``.

    yaw = atan2(dy, dx), pitch = atan2(dz, hypot(dx, dy)), both from the
    direction vector d = target - arm_origin in the same frame.

    Raises ZeroDirection when |d| < 1e-9.
    """
    origin = np.asarray(arm_origin, dtype=np.float64).reshape(3)
    tgt = np.asarray(target, dtype=np.float64).reshape(3)
    d = tgt - origin
    norm = float(np.linalg.norm(d))
    if norm < ZERO_DIRECTION_TOL:
        raise ZeroDirection(f"pointing target coincides with arm origin: |d|={norm}")
    yaw = normalize_angle(math.atan2(d[1], d[0]))
    pitch = math.atan2(d[2], math.hypot(d[0], d[1]))
    return PointingCommand(yaw=yaw, pitch=pitch, arm_origin=origin, direction=d / norm)


@dataclass
class TargetEstimate:
    """Output of the detection-to-pointing localization pipeline."""

    cloud_base: PointCloud
    target_base: np.ndarray
    plane: PlaneFit | None
    mask: ForegroundMask


def localize_target(
    depth: DepthImage,
    box: BoundingBox,
    intrinsics: CameraIntrinsics,
    base_from_camera: RigidTransform,
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH,
    patch_radius_scale: float = DEFAULT_PATCH_RADIUS_SCALE,
) -> TargetEstimate:
    """Full pipeline from a detection box to a base-frame pointing target.

    Extracts the foreground mask, back-projects it, transforms the cloud to
    the base frame, fits a camera-facing plane to the patch around the
    centroid, and returns the centroid as the pointing target.  A degenerate
    patch (for example a sliver mask) downgrades the plane to None rather
    than failing the whole localization.
    """
    mask = extract_foreground(depth, box, band_halfwidth)
    pixel_list = sorted(mask.pixels)
    pix = np.array(pixel_list, dtype=np.float64)
    depths = depth.depth[pix[:, 1].astype(int), pix[:, 0].astype(int)]
    cloud_cam = PointCloud(points=backproject_pixels(pix, depths, intrinsics), frame="camera")
    cloud_base = to_base(cloud_cam, base_from_camera)
    patch = centroid_patch(cloud_base, patch_radius_scale)
    camera_axis_base = base_from_camera.rotation @ np.array([0.0, 0.0, 1.0])
    try:
        plane: PlaneFit | None = fit_plane(patch, camera_axis_base)
    except DegeneratePatch:
        logger.warning("plane fit degenerate for %d-point patch; using centroid only", len(patch))
        plane = None
    return TargetEstimate(
        cloud_base=cloud_base,
        target_base=cloud_base.centroid,
        plane=plane,
        mask=mask,
    )
