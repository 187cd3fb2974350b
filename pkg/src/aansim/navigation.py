"""Navigation stack: layered costmap, A* global planning over an inflated
grid, a dynamic-window local planner, and the search-location sequencer.

Costs live in [0, 255] with 255 for lethal (Occupied or Unknown) cells.
Inflated cells carry 254 * exp(-decay * (d - robot_radius)) clipped to
[1, 253], where d is the Euclidean distance to the nearest lethal cell, so
cells closer than the robot radius saturate at 253 and are treated as
untraversable along with lethal cells.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np
from scipy import ndimage

from . import geometry, world
from .geometry import PlaneFit, RigidTransform
from .world import (
    CellState,
    DetectionResult,
    DetectorModel,
    OccupancyGrid,
    RegionOfInterest,
    RobotState,
    Scene,
)

LETHAL_COST = 255.0
# Cells at or above this cost are untraversable (inscribed or lethal).
INSCRIBED_COST = 253.0


class NavigationError(Exception):
    """Base class for planner failures."""


class NoPath(NavigationError):
    """A* exhausted the open set without reaching the goal."""


class LethalEndpoint(NavigationError):
    """Start or goal lies on an untraversable cell or off the map."""


class AllBlocked(NavigationError):
    """Every sampled dynamic-window arc collides; recovery required."""


class RoiUnreachable(NavigationError):
    """Navigation to a search location failed after recovery."""


@dataclass
class Costmap:
    """Float cost grid sharing geometry with the source occupancy grid."""

    cost: np.ndarray
    resolution: float
    origin: tuple[float, float]
    inflation_radius: float
    cost_decay: float
    robot_radius: float

    @property
    def height(self) -> int:
        return int(self.cost.shape[0])

    @property
    def width(self) -> int:
        return int(self.cost.shape[1])

    def world_to_cell(self, x: float, y: float) -> tuple[int, int] | None:
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

    def cost_at(self, x: float, y: float) -> float:
        """Cost at a world point; off-map counts as lethal."""
        cell = self.world_to_cell(x, y)
        if cell is None:
            return LETHAL_COST
        return float(self.cost[cell[1], cell[0]])

    def traversable(self, i: int, j: int) -> bool:
        return self.cost[j, i] < INSCRIBED_COST


def build_costmap(
    grid: OccupancyGrid,
    inflation_radius: float,
    cost_decay: float = 1.0,
    robot_radius: float = 0.2,
) -> Costmap:
    """Inflate lethal cells into a smooth cost field.

    Occupied and Unknown cells are lethal (255).  Within the inflation
    radius, cost decays exponentially with the Euclidean distance to the
    nearest lethal cell; beyond it, cost is 0.
    """
    if inflation_radius < 0.0:
        raise ValueError("inflation_radius must be >= 0")
    lethal = (grid.cells == CellState.OCCUPIED) | (grid.cells == CellState.UNKNOWN)
    cost = np.zeros(grid.cells.shape, dtype=np.float64)
    cost[lethal] = LETHAL_COST
    if inflation_radius > 0.0 and lethal.any():
        dist = ndimage.distance_transform_edt(~lethal, sampling=grid.resolution)
        band = ~lethal & (dist <= inflation_radius)
        inflated = 254.0 * np.exp(-cost_decay * (dist - robot_radius))
        cost[band] = np.clip(inflated[band], 1.0, 253.0)
    return Costmap(
        cost=cost,
        resolution=grid.resolution,
        origin=grid.origin,
        inflation_radius=inflation_radius,
        cost_decay=cost_decay,
        robot_radius=robot_radius,
    )


@dataclass
class GlobalPath:
    """A* result: cell-center waypoints from start to goal."""

    waypoints: np.ndarray  # (N, 2) world coordinates
    cells: list[tuple[int, int]]
    cost: float


_MOVES = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, math.sqrt(2.0)),
    (1, -1, math.sqrt(2.0)),
    (-1, 1, math.sqrt(2.0)),
    (-1, -1, math.sqrt(2.0)),
]

# Shrink the heuristic by a hair so float rounding can never make it
# inadmissible against float-accumulated path costs.
_HEURISTIC_SHRINK = 1.0 - 1e-12


def plan_global(
    costmap: Costmap, start: tuple[float, float], goal: tuple[float, float]
) -> GlobalPath:
    """8-connected A* over the costmap.

    Edge weight is the Euclidean step length times (1 + cost(target)/128);
    the heuristic is the Euclidean distance, so returned costs are minimal.
    Stale heap entries are skipped and better g-values re-queued, making the
    returned cost bit-identical to a Dijkstra relaxation fixpoint.
    """
    start_cell = costmap.world_to_cell(*start)
    goal_cell = costmap.world_to_cell(*goal)
    if start_cell is None or goal_cell is None:
        raise LethalEndpoint(f"start {start} or goal {goal} outside the map")
    if not costmap.traversable(*start_cell):
        raise LethalEndpoint(f"start {start} lies on an untraversable cell")
    if not costmap.traversable(*goal_cell):
        raise LethalEndpoint(f"goal {goal} lies on an untraversable cell")

    if start_cell == goal_cell:
        return GlobalPath(
            waypoints=np.array([costmap.cell_center(*start_cell)]),
            cells=[start_cell],
            cost=0.0,
        )

    res = costmap.resolution
    cost = costmap.cost

    def heuristic(cell: tuple[int, int]) -> float:
        return (
            math.hypot(cell[0] - goal_cell[0], cell[1] - goal_cell[1])
            * res
            * _HEURISTIC_SHRINK
        )

    g: dict[tuple[int, int], float] = {start_cell: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap: list[tuple[float, int, float, tuple[int, int]]] = [
        (heuristic(start_cell), counter, 0.0, start_cell)
    ]
    while heap:
        _, _, g_pop, cell = heapq.heappop(heap)
        if g_pop != g.get(cell):
            continue  # stale entry
        if cell == goal_cell:
            cells = [cell]
            while cells[-1] != start_cell:
                cells.append(parent[cells[-1]])
            cells.reverse()
            waypoints = np.array([costmap.cell_center(i, j) for i, j in cells])
            return GlobalPath(waypoints=waypoints, cells=cells, cost=g_pop)
        i, j = cell
        for di, dj, step in _MOVES:
            ni, nj = i + di, j + dj
            if not (0 <= ni < costmap.width and 0 <= nj < costmap.height):
                continue
            c = cost[nj, ni]
            if c >= INSCRIBED_COST:
                continue
            g_new = g[cell] + step * res * (1.0 + c / 128.0)
            nxt = (ni, nj)
            if g_new < g.get(nxt, math.inf):
                g[nxt] = g_new
                parent[nxt] = cell
                counter += 1
                heapq.heappush(heap, (g_new + heuristic(nxt), counter, g_new, nxt))
    raise NoPath(f"no traversable path from {start} to {goal}")


@dataclass(frozen=True)
class DwaParams:
    """Dynamic-window sampling bounds, rollout horizon, and score weights."""

    v_min: float = 0.0
    v_max: float = 0.5
    omega_min: float = -1.0
    omega_max: float = 1.0
    accel_v: float = 0.5
    accel_omega: float = 1.0
    n_v: int = 11
    n_omega: int = 21
    horizon: float = 2.0
    heading_weight: float = 0.8
    clearance_weight: float = 0.1
    velocity_weight: float = 0.1
    lookahead: float = 0.6


def lookahead_point(path: GlobalPath, x: float, y: float, dist: float) -> tuple[float, float]:
    """First waypoint at least ``dist`` ahead of the nearest one to (x, y)."""
    wps = path.waypoints
    deltas = wps - np.array([x, y])
    d2 = np.einsum("ij,ij->i", deltas, deltas)
    nearest = int(np.argmin(d2))
    for k in range(nearest, len(wps)):
        if math.hypot(wps[k, 0] - x, wps[k, 1] - y) >= dist:
            return (float(wps[k, 0]), float(wps[k, 1]))
    return (float(wps[-1, 0]), float(wps[-1, 1]))


def _normalize(raw: np.ndarray) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        return (raw - lo) / (hi - lo)
    return np.zeros_like(raw)


def dwa_step(
    robot: RobotState,
    path: GlobalPath,
    costmap: Costmap,
    params: DwaParams,
    dt: float,
) -> tuple[float, float]:
    """Pick the best admissible (v, omega) from the dynamic window.

    Candidates are an n_v x n_omega lattice over the reachable window,
    enumerated v-major (all omegas for the lowest v first).  Each is rolled
    out with exact arcs for the horizon in substeps of ``dt``; arcs touching
    untraversable cells (or leaving the map) are discarded.  Survivors are
    scored with heading (endpoint bearing error to the lookahead point,
    wrapped with IEEE remainder), clearance (worst (254 - cost) / 254 along
    the arc), and velocity terms, each min-max normalized over the
    admissible set, weighted and summed.  Exact score ties fall to lower
    |omega|, then lower v.

    Raises AllBlocked when every candidate collides.
    """
    v_lo = max(params.v_min, robot.v - params.accel_v * dt)
    v_hi = min(params.v_max, robot.v + params.accel_v * dt)
    w_lo = max(params.omega_min, robot.omega - params.accel_omega * dt)
    w_hi = min(params.omega_max, robot.omega + params.accel_omega * dt)
    vs = np.linspace(v_lo, v_hi, params.n_v)
    ws = np.linspace(w_lo, w_hi, params.n_omega)
    vv, ww = np.meshgrid(vs, ws, indexing="ij")
    v_flat = vv.ravel()
    w_flat = ww.ravel()

    n_steps = max(1, int(round(params.horizon / dt)))
    tau = dt * np.arange(1, n_steps + 1)

    theta0 = robot.heading
    theta = theta0 + np.outer(w_flat, tau)  # (M, K)
    straight = np.abs(w_flat) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        radius = np.where(straight, 0.0, v_flat / np.where(straight, 1.0, w_flat))
    x_arc = robot.x + radius[:, None] * (np.sin(theta) - math.sin(theta0))
    y_arc = robot.y - radius[:, None] * (np.cos(theta) - math.cos(theta0))
    x_str = robot.x + np.outer(v_flat, tau) * math.cos(theta0)
    y_str = robot.y + np.outer(v_flat, tau) * math.sin(theta0)
    xs = np.where(straight[:, None], x_str, x_arc)
    ys = np.where(straight[:, None], y_str, y_arc)

    ox, oy = costmap.origin
    ci = np.floor((xs - ox) / costmap.resolution).astype(np.int64)
    cj = np.floor((ys - oy) / costmap.resolution).astype(np.int64)
    inside = (ci >= 0) & (ci < costmap.width) & (cj >= 0) & (cj < costmap.height)
    cell_cost = np.full(ci.shape, LETHAL_COST)
    cell_cost[inside] = costmap.cost[cj[inside], ci[inside]]
    collides = (cell_cost >= INSCRIBED_COST).any(axis=1)
    admissible = ~collides
    if not admissible.any():
        raise AllBlocked("every dynamic-window arc collides")

    idx = np.nonzero(admissible)[0]
    lx, ly = lookahead_point(path, robot.x, robot.y, params.lookahead)
    t_end = float(tau[-1])
    # Scoring runs in scalar math on purpose: the per-candidate terms are
    # part of the planner's reproducibility contract, and scalar libm calls
    # are bit-stable where some vectorized transcendentals are not.
    raw_heading = np.empty(len(idx))
    raw_velocity = np.empty(len(idx))
    for m, i in enumerate(idx):
        v_i, w_i = float(v_flat[i]), float(w_flat[i])
        ex, ey, eth = world.unicycle_arc(robot.x, robot.y, theta0, v_i, w_i, t_end)
        bearing = math.atan2(ly - ey, lx - ex)
        raw_heading[m] = math.pi - abs(math.remainder(bearing - eth, 2.0 * math.pi))
        raw_velocity[m] = v_i
    raw_clearance = ((254.0 - cell_cost[idx]) / 254.0).min(axis=1)

    score = (
        params.heading_weight * _normalize(raw_heading)
        + params.clearance_weight * _normalize(raw_clearance)
        + params.velocity_weight * _normalize(raw_velocity)
    )

    best = 0
    for m in range(1, len(idx)):
        s, bs = score[m], score[best]
        if s > bs:
            best = m
        elif s == bs:
            wm, wb = abs(w_flat[idx[m]]), abs(w_flat[idx[best]])
            if wm < wb or (wm == wb and v_flat[idx[m]] < v_flat[idx[best]]):
                best = m
    return (float(v_flat[idx[best]]), float(w_flat[idx[best]]))


class Clock:
    """Simulated time accumulator shared by the navigation and episode loops."""

    def __init__(self, t: float = 0.0) -> None:
        self.t = float(t)

    def advance(self, dt: float) -> float:
        self.t += dt
        return self.t


@dataclass
class NavResult:
    arrived: bool
    reason: str
    ticks: int
    collisions: int = 0


@dataclass
class NavSession:
    """Everything the search sequencer needs to move, look, and keep time."""

    scene: Scene
    grid: OccupancyGrid
    costmap: Costmap
    robot: RobotState
    rois: list[RegionOfInterest]
    intrinsics: "geometry.CameraIntrinsics"
    detector: DetectorModel
    params: DwaParams
    clock: Clock
    detector_rng: np.random.Generator
    depth_noise_rng: np.random.Generator | None = None
    pose_noise_rng: np.random.Generator | None = None
    dt: float = 0.1
    arrival_pos_tol: float = 0.3
    arrival_ang_tol: float = math.radians(15.0)
    pan_schedule: list[float] = field(default_factory=world.default_pan_schedule)
    frame_time: float = 0.6
    depth_noise_sigma: float = 0.0
    pose_noise_sigma: float = 0.0
    recovery_spin_time: float = 2.0
    on_progress: Callable[[str, dict], None] | None = None

    def note(self, kind: str, **payload) -> None:
        if self.on_progress is not None:
            self.on_progress(kind, payload)


def _observed_pose(session: NavSession) -> RobotState:
    """Robot state as the planner sees it (optionally noise-injected)."""
    robot = session.robot
    if session.pose_noise_sigma <= 0.0 or session.pose_noise_rng is None:
        return robot
    noise = session.pose_noise_rng.normal(0.0, session.pose_noise_sigma, size=3)
    return replace(
        robot,
        x=robot.x + noise[0],
        y=robot.y + noise[1],
        heading=robot.heading + noise[2],
    )


def _spin_in_place(session: NavSession, duration: float) -> None:
    ticks = int(round(duration / session.dt))
    for _ in range(ticks):
        session.robot, _ = world.step_kinematics(
            session.robot, (0.0, session.params.omega_max), session.dt, session.grid
        )
        session.clock.advance(session.dt)


def navigate_to(
    session: NavSession,
    goal_pose: tuple[float, float, float],
    max_ticks: int | None = None,
) -> NavResult:
    """Drive to a goal pose: DWA to the position, then rotate to the heading.

    On AllBlocked the robot spins in place for up to the recovery time and
    replans once; a second AllBlocked (or a failed replan) abandons the goal.
    """
    gx, gy, gh = goal_pose
    params = session.params
    dt = session.dt
    try:
        path = plan_global(session.costmap, (session.robot.x, session.robot.y), (gx, gy))
    except NavigationError as exc:
        return NavResult(arrived=False, reason=f"no_path: {exc}", ticks=0)

    if max_ticks is None:
        travel = path.cost / max(params.v_max, 1e-6) + 4.0 * math.pi / max(params.omega_max, 1e-6)
        max_ticks = int(math.ceil(4.0 * travel / dt)) + 200

    ticks = 0
    collisions = 0
    recovery_used = False
    while ticks < max_ticks:
        if math.hypot(session.robot.x - gx, session.robot.y - gy) <= session.arrival_pos_tol:
            break
        try:
            cmd = dwa_step(_observed_pose(session), path, session.costmap, params, dt)
        except AllBlocked:
            if recovery_used:
                return NavResult(False, "all_blocked", ticks, collisions)
            session.note("recovery_spin", t=session.clock.t)
            _spin_in_place(session, session.recovery_spin_time)
            ticks += int(round(session.recovery_spin_time / dt))
            recovery_used = True
            try:
                path = plan_global(
                    session.costmap, (session.robot.x, session.robot.y), (gx, gy)
                )
            except NavigationError:
                return NavResult(False, "all_blocked", ticks, collisions)
            continue
        session.robot, hit = world.step_kinematics(session.robot, cmd, dt, session.grid)
        if hit:
            collisions += 1
        session.clock.advance(dt)
        ticks += 1
    else:
        return NavResult(False, "tick_cap", ticks, collisions)

    # Align to the approach heading with bounded rotation commands.
    while ticks < max_ticks:
        err = geometry.normalize_angle(gh - session.robot.heading)
        if abs(err) <= session.arrival_ang_tol:
            return NavResult(True, "arrived", ticks, collisions)
        omega = max(-params.omega_max, min(params.omega_max, err / dt))
        session.robot, _ = world.step_kinematics(session.robot, (0.0, omega), dt, session.grid)
        session.clock.advance(dt)
        ticks += 1
    return NavResult(False, "tick_cap", ticks, collisions)


@dataclass(frozen=True)
class FoundTarget:
    """Detection enriched with the base-frame pointing target."""

    detection: DetectionResult
    target_base: np.ndarray
    plane: PlaneFit | None
    center_fallback: bool
    robot_pose: tuple[float, float, float]
    roi_id: str


@dataclass(frozen=True)
class RoiEvent:
    """Sequencer output: miss / found / roi_unreachable / exhausted."""

    kind: str
    t: float
    roi: RegionOfInterest | None = None
    target: FoundTarget | None = None


def _scan_with_timing(session: NavSession) -> DetectionResult | None:
    def on_frame(_pan: float) -> None:
        session.clock.advance(session.frame_time)

    return world.scan_at_roi(
        session.scene,
        session.robot,
        session.detector,
        session.intrinsics,
        session.detector_rng,
        pan_schedule=session.pan_schedule,
        on_frame=on_frame,
    )


def _localize(session: NavSession, det: DetectionResult) -> FoundTarget | None:
    """Run the perception pipeline on the frame that produced a detection."""
    robot = session.robot
    original_pan = robot.head_pan
    robot.head_pan = det.pan
    try:
        depth = world.render_depth(
            session.scene,
            robot,
            session.intrinsics,
            max_range=session.detector.max_range,
            noise_sigma=session.depth_noise_sigma,
            rng=session.depth_noise_rng,
        )
        est = geometry.localize_target(
            depth, det.box, session.intrinsics, robot.base_from_camera()
        )
    except geometry.GeometryError:
        return None
    finally:
        robot.head_pan = original_pan
    return FoundTarget(
        detection=det,
        target_base=est.target_base,
        plane=est.plane,
        center_fallback=est.mask.center_fallback,
        robot_pose=robot.pose,
        roi_id="",
    )


def roi_sequencer(session: NavSession) -> Iterator[RoiEvent]:
    """Visit search locations in order, scanning each until a hit.

    Yields Miss(roi) / Found(roi) / RoiUnreachable(roi) per location, each at
    most once, then Exhausted if nothing was found.  The generator advances
    the shared clock as it drives and scans.
    """
    for roi in session.rois:
        session.note("navigating", roi=roi.id, t=session.clock.t)
        nav = navigate_to(session, roi.pose)
        if not nav.arrived:
            session.note("unreachable", roi=roi.id, reason=nav.reason, t=session.clock.t)
            yield RoiEvent("roi_unreachable", session.clock.t, roi=roi)
            continue
        session.note("scanning", roi=roi.id, t=session.clock.t)
        det = _scan_with_timing(session)
        if det is None:
            yield RoiEvent("miss", session.clock.t, roi=roi)
            continue
        target = _localize(session, det)
        if target is None:
            # Localization on the detection frame failed; count as a miss.
            yield RoiEvent("miss", session.clock.t, roi=roi)
            continue
        target = replace(target, roi_id=roi.id)
        yield RoiEvent("found", session.clock.t, roi=roi, target=target)
        return
    yield RoiEvent("exhausted", session.clock.t)
