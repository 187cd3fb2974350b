"""Simulated tabletop world: occupancy grid, scene objects, depth-camera
rendering, a parametric object detector, and unicycle base kinematics.

World frame: X/Y in the floor plane, Z up, units meters.  Grid cells are
squares of side ``resolution``; cell (i, j) covers x in
[origin_x + i*res, origin_x + (i+1)*res) and y likewise with j.  The first
data row of the ASCII map format is row j = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .geometry import (
    BoundingBox,
    CameraIntrinsics,
    DepthImage,
    RigidTransform,
)

# Occupied grid cells block camera rays up to this height (meters).
WALL_HEIGHT = 2.0

# Minimum ray parameter considered a hit, to avoid self-intersections.
_RAY_EPS = 1e-9


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


_ASCII_TO_CELL = {".": CellState.FREE, "#": CellState.OCCUPIED, "?": CellState.UNKNOWN}
_CELL_TO_ASCII = {v: k for k, v in _ASCII_TO_CELL.items()}


@dataclass
class OccupancyGrid:
    """2-D occupancy grid; ``cells`` has shape (height, width)."""

    cells: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 2:
            raise ValueError(f"grid cells must be 2-D, got shape {self.cells.shape}")
        if self.resolution <= 0.0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not np.isin(self.cells, [0, 1, 2]).all():
            raise ValueError("grid contains cell states outside {Free, Occupied, Unknown}")

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    def world_to_cell(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell (i, j) containing the world point, or None outside the map."""
        i = math.floor((x - self.origin[0]) / self.resolution)
        j = math.floor((y - self.origin[1]) / self.resolution)
        if 0 <= i < self.width and 0 <= j < self.height:
            return (i, j)
        return None

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.origin[0] + (i + 0.5) * self.resolution,
            self.origin[1] + (j + 0.5) * self.resolution,
        )

    def state_at(self, x: float, y: float) -> CellState | None:
        cell = self.world_to_cell(x, y)
        if cell is None:
            return None
        return CellState(int(self.cells[cell[1], cell[0]]))

    @classmethod
    def from_ascii(cls, text: str, origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        """Parse the ASCII map format.

        First line: ``WIDTH HEIGHT RESOLUTION``; then HEIGHT rows of WIDTH
        characters from {#, ., ?} for Occupied, Free, Unknown, row j = 0
        first.
        """
        lines = [ln for ln in text.splitlines() if ln.strip() != ""]
        if not lines:
            raise ValueError("empty map text")
        header = lines[0].split()
        if len(header) != 3:
            raise ValueError(f"map header must be 'W H RESOLUTION', got {lines[0]!r}")
        width, height = int(header[0]), int(header[1])
        resolution = float(header[2])
        rows = lines[1:]
        if len(rows) != height:
            raise ValueError(f"map declares {height} rows but has {len(rows)}")
        cells = np.zeros((height, width), dtype=np.uint8)
        for j, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"map row {j} has {len(row)} cells, expected {width}")
            for i, ch in enumerate(row):
                if ch not in _ASCII_TO_CELL:
                    raise ValueError(f"map row {j} col {i}: unknown cell char {ch!r}")
                cells[j, i] = _ASCII_TO_CELL[ch]
        return cls(cells=cells, resolution=resolution, origin=origin)

    def to_ascii(self) -> str:
        header = f"{self.width} {self.height} {self.resolution:g}"
        rows = [
            "".join(_CELL_TO_ASCII[CellState(int(c))] for c in self.cells[j])
            for j in range(self.height)
        ]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def load(cls, path: str | Path, origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        return cls.from_ascii(Path(path).read_text(), origin=origin)


@dataclass(frozen=True)
class RegionOfInterest:
    """Named approach pose the robot visits while searching."""

    id: str
    pose: tuple[float, float, float]  # x, y, heading (radians)
    label: str


class ObjectKind(Enum):
    PILL_BOTTLE = "pill_bottle"
    WATER_BOTTLE = "water_bottle"
    DISTRACTOR = "distractor"
    SUPPORT = "support"  # furniture: occludes and carries objects, never detected


@dataclass(frozen=True)
class BoxShape:
    """Axis-aligned box; ``size`` = (dx, dy, dz), position = geometric center."""

    size: tuple[float, float, float]


@dataclass(frozen=True)
class CylinderShape:
    """Vertical cylinder; position = center of the base circle."""

    radius: float
    height: float


@dataclass(frozen=True)
class SceneObject:
    kind: ObjectKind
    position: tuple[float, float, float]
    shape: BoxShape | CylinderShape
    name: str = ""

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """World-frame axis-aligned bounds (min_corner, max_corner)."""
        p = np.asarray(self.position, dtype=np.float64)
        if isinstance(self.shape, BoxShape):
            half = np.asarray(self.shape.size, dtype=np.float64) / 2.0
            return p - half, p + half
        r, h = self.shape.radius, self.shape.height
        lo = p + np.array([-r, -r, 0.0])
        hi = p + np.array([r, r, h])
        return lo, hi


@dataclass
class Scene:
    """Static episode world: a grid plus the objects standing in it."""

    grid: OccupancyGrid
    objects: list[SceneObject]
    _wall_rects: list[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self._wall_rects is None:
            self._wall_rects = _merge_occupied_rects(self.grid)

    @property
    def wall_rects(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return self._wall_rects

    def pill_bottle_index(self) -> int | None:
        for idx, obj in enumerate(self.objects):
            if obj.kind is ObjectKind.PILL_BOTTLE:
                return idx
        return None


def _merge_occupied_rects(grid: OccupancyGrid) -> list[tuple[np.ndarray, np.ndarray]]:
    """Greedy merge of occupied cells into world-frame AABBs (walls).

    Row runs of occupied cells are merged, then runs with identical column
    spans on consecutive rows are stacked, so typical wall layouts collapse
    into a handful of boxes and rendering stays cheap.
    """
    occupied = grid.cells == CellState.OCCUPIED
    res = grid.resolution
    ox, oy = grid.origin
    open_runs: dict[tuple[int, int], tuple[int, int]] = {}  # (i0, i1) -> (j0, j1)
    rects: list[tuple[int, int, int, int]] = []
    for j in range(grid.height):
        row_runs = []
        i = 0
        while i < grid.width:
            if occupied[j, i]:
                i0 = i
                while i < grid.width and occupied[j, i]:
                    i += 1
                row_runs.append((i0, i - 1))
            else:
                i += 1
        next_open: dict[tuple[int, int], tuple[int, int]] = {}
        for run in row_runs:
            if run in open_runs and open_runs[run][1] == j - 1:
                next_open[run] = (open_runs[run][0], j)
            else:
                next_open[run] = (j, j)
        for run, span in open_runs.items():
            if run not in next_open:
                rects.append((run[0], run[1], span[0], span[1]))
        open_runs = next_open
    for run, span in open_runs.items():
        rects.append((run[0], run[1], span[0], span[1]))

    out = []
    for i0, i1, j0, j1 in rects:
        lo = np.array([ox + i0 * res, oy + j0 * res, 0.0])
        hi = np.array([ox + (i1 + 1) * res, oy + (j1 + 1) * res, WALL_HEIGHT])
        out.append((lo, hi))
    return out


@dataclass
class RobotState:
    """Base pose, commanded velocities, head pan, and the camera mount."""

    x: float
    y: float
    heading: float
    v: float = 0.0
    omega: float = 0.0
    head_pan: float = 0.0
    camera_mount: RigidTransform = field(default_factory=RigidTransform.identity)
    v_limit: float = 2.0
    omega_limit: float = 3.0

    def __post_init__(self) -> None:
        if abs(self.v) > self.v_limit + 1e-12:
            raise ValueError(f"|v|={abs(self.v)} exceeds limit {self.v_limit}")
        if abs(self.omega) > self.omega_limit + 1e-12:
            raise ValueError(f"|omega|={abs(self.omega)} exceeds limit {self.omega_limit}")

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)

    def world_from_base(self) -> RigidTransform:
        return RigidTransform.from_yaw(self.heading, (self.x, self.y, 0.0))

    def base_from_camera(self) -> RigidTransform:
        """Camera extrinsics including the current head pan.

        The pan joint rotates the mount about the base Z axis, which is a
        fair desk-scale approximation of a head-mounted camera.
        """
        pan = RigidTransform.from_yaw(self.head_pan)
        return pan.compose(self.camera_mount)

    def world_from_camera(self) -> RigidTransform:
        return self.world_from_base().compose(self.base_from_camera())


def standard_camera_mount(
    xyz: tuple[float, float, float] = (0.05, 0.0, 1.15),
    pitch: float = 0.0,
) -> RigidTransform:
    """base<-camera transform for a forward-looking camera.

    Camera axes map to the base frame as X_cam -> -Y_base, Y_cam -> -Z_base,
    Z_cam -> +X_base; ``pitch`` tilts the optical axis down (negative) or up
    (positive) about the camera X axis.
    """
    base_from_cam = np.array(
        [
            [0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
        ]
    )
    c, s = math.cos(pitch), math.sin(pitch)
    # Rotation about the camera X axis; positive pitch raises the optical axis.
    tilt = np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    return RigidTransform(base_from_cam @ tilt, np.asarray(xyz, dtype=np.float64))


@dataclass(frozen=True)
class DetectorModel:
    """Parametric single-class detector for the pill bottle."""

    true_positive_rate: float = 0.9
    false_positive_rate: float = 0.02
    box_noise_sigma: float = 1.0
    max_range: float = 4.0
    min_pixel_area: int = 25

    def __post_init__(self) -> None:
        for name in ("true_positive_rate", "false_positive_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if self.box_noise_sigma < 0.0:
            raise ValueError("box_noise_sigma must be >= 0")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class DetectionResult:
    """A detector hit: claimed kind plus ground truth for evaluation."""

    box: BoundingBox
    claimed_kind: ObjectKind
    true_kind: ObjectKind
    object_index: int
    pan: float = 0.0


# Ray ids for non-object hits in the instance buffer.
NO_HIT = -1
WALL_HIT = -2


def _ray_box(origins, dirs, lo, hi) -> np.ndarray:
    """Slab-method ray/AABB intersection; returns hit parameter or inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origins) / dirs
        t2 = (hi - origins) / dirs
    # d == 0 inside the slab gives 0/0 = nan; the axis then never constrains.
    t_low = np.nan_to_num(np.minimum(t1, t2), nan=-np.inf)
    t_high = np.nan_to_num(np.maximum(t1, t2), nan=np.inf)
    t_near = t_low.max(axis=1)
    t_far = t_high.min(axis=1)
    hit = (t_far >= t_near) & (t_far > _RAY_EPS) & (t_near > _RAY_EPS)
    return np.where(hit, t_near, np.inf)


def _ray_cylinder(origins, dirs, center, radius, z0, z1) -> np.ndarray:
    """Ray/vertical-cylinder intersection (lateral surface and caps)."""
    ox = origins[:, 0] - center[0]
    oy = origins[:, 1] - center[1]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
        s_lat = (-b - sqrt_disc) / (2.0 * a)
    z_at = origins[:, 2] + s_lat * dz
    lat_ok = (disc >= 0.0) & (a > 1e-30) & (s_lat > _RAY_EPS) & (z_at >= z0) & (z_at <= z1)
    s_lateral = np.where(lat_ok, s_lat, np.inf)

    best = s_lateral
    for z_cap in (z0, z1):
        with np.errstate(divide="ignore", invalid="ignore"):
            s_cap = (z_cap - origins[:, 2]) / dz
        px = origins[:, 0] + s_cap * dirs[:, 0] - center[0]
        py = origins[:, 1] + s_cap * dirs[:, 1] - center[1]
        cap_ok = (
            np.isfinite(s_cap)
            & (s_cap > _RAY_EPS)
            & (px * px + py * py <= radius * radius)
        )
        best = np.minimum(best, np.where(cap_ok, s_cap, np.inf))
    return best


def render_depth_ids(
    scene: Scene,
    robot: RobotState,
    intrinsics: CameraIntrinsics,
    max_range: float = 10.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free depth plus per-pixel instance ids via analytic ray casting.

    Depth is the camera-frame Z of the nearest hit (object or 2 m tall grid
    wall); pixels with no hit within ``max_range`` hold 0.  Ids are object
    indices, WALL_HIT for grid walls, NO_HIT otherwise.
    """
    h, w = intrinsics.height, intrinsics.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    # Rays parameterized so that the parameter s equals camera-frame Z.
    dirs_cam = np.stack(
        [
            (us - intrinsics.cx) / intrinsics.fx,
            (vs - intrinsics.cy) / intrinsics.fy,
            np.ones_like(us),
        ],
        axis=-1,
    ).reshape(-1, 3)
    cam_pose = robot.world_from_camera()
    dirs = dirs_cam @ cam_pose.rotation.T
    origins = np.broadcast_to(cam_pose.translation, dirs.shape)

    best = np.full(dirs.shape[0], np.inf)
    ids = np.full(dirs.shape[0], NO_HIT, dtype=np.int32)

    for idx, obj in enumerate(scene.objects):
        if isinstance(obj.shape, BoxShape):
            lo, hi = obj.aabb()
            s = _ray_box(origins, dirs, lo, hi)
        else:
            cx, cy, cz = obj.position
            s = _ray_cylinder(
                origins, dirs, (cx, cy), obj.shape.radius, cz, cz + obj.shape.height
            )
        closer = s < best
        best = np.where(closer, s, best)
        ids = np.where(closer, idx, ids)

    for lo, hi in scene.wall_rects:
        s = _ray_box(origins, dirs, lo, hi)
        closer = s < best
        best = np.where(closer, s, best)
        ids = np.where(closer, WALL_HIT, ids)

    out_of_range = ~np.isfinite(best) | (best > max_range)
    depth = np.where(out_of_range, 0.0, best)
    ids = np.where(out_of_range, NO_HIT, ids)
    return depth.reshape(h, w), ids.reshape(h, w)


def render_depth(
    scene: Scene,
    robot: RobotState,
    intrinsics: CameraIntrinsics,
    max_range: float = 10.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DepthImage:
    """Depth image of the scene, optionally with additive Gaussian noise."""
    depth, _ = render_depth_ids(scene, robot, intrinsics, max_range)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        noisy = depth + rng.normal(0.0, noise_sigma, size=depth.shape)
        depth = np.where(depth > 0.0, np.maximum(noisy, 1e-3), 0.0)
    return DepthImage(depth=depth)


def _visible_pixel_box(ids: np.ndarray, index: int) -> tuple[int, BoundingBox | None]:
    vs, us = np.nonzero(ids == index)
    if len(us) == 0:
        return 0, None
    return len(us), BoundingBox(int(us.min()), int(vs.min()), int(us.max()), int(vs.max()))


def _perturb_box(
    box: BoundingBox, sigma: float, width: int, height: int, rng: np.random.Generator
) -> BoundingBox:
    if sigma <= 0.0:
        return box
    noise = rng.normal(0.0, sigma, size=4)
    u0 = int(round(box.u_min + noise[0]))
    v0 = int(round(box.v_min + noise[1]))
    u1 = int(round(box.u_max + noise[2]))
    v1 = int(round(box.v_max + noise[3]))
    u0, u1 = sorted((u0, u1))
    v0, v1 = sorted((v0, v1))
    return BoundingBox(
        max(0, min(u0, width - 1)),
        max(0, min(v0, height - 1)),
        max(0, min(u1, width - 1)),
        max(0, min(v1, height - 1)),
    )


def detect(
    scene: Scene,
    robot: RobotState,
    model: DetectorModel,
    intrinsics: CameraIntrinsics,
    rng: np.random.Generator,
) -> DetectionResult | None:
    """One detector frame from the robot's current camera pose.

    If the pill bottle is visible (nearest-hit pixel count at or above
    ``min_pixel_area``), a true positive fires with probability
    ``true_positive_rate`` and returns the bottle's visible-pixel box
    perturbed by ``box_noise_sigma``.  Otherwise a visible distractor may
    yield a false positive with probability ``false_positive_rate``.  Draw
    order is fixed (visibility roll first, then the false-positive roll), so
    a seeded rng reproduces results exactly.
    """
    _, ids = render_depth_ids(scene, robot, intrinsics, model.max_range)
    bottle_idx = scene.pill_bottle_index()
    if bottle_idx is not None:
        area, box = _visible_pixel_box(ids, bottle_idx)
        if area >= model.min_pixel_area and box is not None:
            if rng.random() < model.true_positive_rate:
                box = _perturb_box(
                    box, model.box_noise_sigma, intrinsics.width, intrinsics.height, rng
                )
                return DetectionResult(
                    box=box,
                    claimed_kind=ObjectKind.PILL_BOTTLE,
                    true_kind=ObjectKind.PILL_BOTTLE,
                    object_index=bottle_idx,
                    pan=robot.head_pan,
                )
    # False-positive path: the largest visible distractor, if any.
    best_area, best_idx, best_box = 0, None, None
    for idx, obj in enumerate(scene.objects):
        if obj.kind is not ObjectKind.DISTRACTOR:
            continue
        area, box = _visible_pixel_box(ids, idx)
        if box is not None and area >= model.min_pixel_area and area > best_area:
            best_area, best_idx, best_box = area, idx, box
    if best_idx is not None and rng.random() < model.false_positive_rate:
        box = _perturb_box(
            best_box, model.box_noise_sigma, intrinsics.width, intrinsics.height, rng
        )
        return DetectionResult(
            box=box,
            claimed_kind=ObjectKind.PILL_BOTTLE,
            true_kind=ObjectKind.DISTRACTOR,
            object_index=best_idx,
            pan=robot.head_pan,
        )
    return None


def default_pan_schedule(
    pan_min: float = math.radians(-30.0),
    pan_max: float = math.radians(30.0),
    pan_step: float = math.radians(15.0),
) -> list[float]:
    """Head pan sweep, low to high inclusive (default -30..30 deg by 15)."""
    n = int(round((pan_max - pan_min) / pan_step))
    return [pan_min + k * pan_step for k in range(n + 1)]


def scan_at_roi(
    scene: Scene,
    robot: RobotState,
    model: DetectorModel,
    intrinsics: CameraIntrinsics,
    rng: np.random.Generator,
    pan_schedule: list[float] | None = None,
    on_frame=None,
) -> DetectionResult | None:
    """Sweep the head through the pan schedule and return the first hit.

    Each pan angle is visited at most once; the robot's head pan is restored
    afterward.  The returned detection records the pan at which it fired.
    ``on_frame(pan)``, if given, runs once per attempted frame so callers can
    account for dwell time.
    """
    if pan_schedule is None:
        pan_schedule = default_pan_schedule()
    original_pan = robot.head_pan
    try:
        for pan in pan_schedule:
            robot.head_pan = pan
            if on_frame is not None:
                on_frame(pan)
            result = detect(scene, robot, model, intrinsics, rng)
            if result is not None:
                return result
        return None
    finally:
        robot.head_pan = original_pan


def unicycle_arc(
    x: float, y: float, heading: float, v: float, omega: float, t: float
) -> tuple[float, float, float]:
    """Exact constant-twist (arc) integration of the unicycle model."""
    if abs(omega) < 1e-12:
        return (x + v * t * math.cos(heading), y + v * t * math.sin(heading), heading)
    radius = v / omega
    new_heading = heading + omega * t
    return (
        x + radius * (math.sin(new_heading) - math.sin(heading)),
        y - radius * (math.cos(new_heading) - math.cos(heading)),
        new_heading,
    )


def step_kinematics(
    robot: RobotState,
    cmd: tuple[float, float],
    dt: float,
    grid: OccupancyGrid,
) -> tuple[RobotState, bool]:
    """Advance the base by (v, omega) for dt seconds with exact arcs.

    The swept arc is sampled at half-cell spatial resolution (and at most
    0.1 rad of turn per sample); if a sample lands in an Occupied cell or
    off the map, motion stops at the last free sample, velocities drop to
    zero, and the collision flag is returned True.
    """
    v = max(-robot.v_limit, min(robot.v_limit, cmd[0]))
    omega = max(-robot.omega_limit, min(robot.omega_limit, cmd[1]))
    arc_len = abs(v) * dt
    n = max(
        1,
        math.ceil(arc_len / (0.5 * grid.resolution)),
        math.ceil(abs(omega) * dt / 0.1),
    )
    last_free = (robot.x, robot.y, robot.heading)
    for k in range(1, n + 1):
        px, py, ph = unicycle_arc(robot.x, robot.y, robot.heading, v, omega, dt * k / n)
        state = grid.state_at(px, py)
        if state is None or state is CellState.OCCUPIED:
            collided = replace(
                robot, x=last_free[0], y=last_free[1], heading=last_free[2], v=0.0, omega=0.0
            )
            return collided, True
        last_free = (px, py, ph)
    moved = replace(
        robot, x=last_free[0], y=last_free[1], heading=last_free[2], v=v, omega=omega
    )
    return moved, False
