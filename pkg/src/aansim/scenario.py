"""Scenario files: validation, world construction, deterministic hashing.

A scenario is a JSON document describing the room map, the robot start
pose, camera and detector parameters, the search regions with their bottle
placement candidates, static furniture and distractor objects, and the user
profile.  Validation errors carry a JSON path (``$.rois[2].pose``) so bad
files are easy to fix.  The scenario hash covers the canonical JSON body
and the raw map bytes, so any change to either shows up in session logs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from . import usersim, world
from .geometry import CameraIntrinsics
from .orchestrator import AssistLevel, OrchestratorConfig
from .world import (
    BoxShape,
    CylinderShape,
    DetectorModel,
    ObjectKind,
    OccupancyGrid,
    RegionOfInterest,
    RobotState,
    Scene,
    SceneObject,
    standard_camera_mount,
)


class ScenarioInvalid(ValueError):
    """The scenario file violates the schema; the message carries a JSON path."""


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ScenarioInvalid(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, required: bool = True, default=None):
    if key not in obj:
        _expect(not required, f"{path}.{key}", "missing required key")
        return default
    return obj[key]


def _num(value, path: str, lo: float | None = None, hi: float | None = None) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path, "expected a number")
    v = float(value)
    if lo is not None:
        _expect(v >= lo, path, f"must be >= {lo}")
    if hi is not None:
        _expect(v <= hi, path, f"must be <= {hi}")
    return v


def _vec(value, path: str, n: int) -> tuple[float, ...]:
    _expect(isinstance(value, list) and len(value) == n, path, f"expected {n} numbers")
    return tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(value))


def _str(value, path: str) -> str:
    _expect(isinstance(value, str) and value != "", path, "expected a non-empty string")
    return value


_OBJECT_KINDS = {
    "water_bottle": ObjectKind.WATER_BOTTLE,
    "distractor": ObjectKind.DISTRACTOR,
    "support": ObjectKind.SUPPORT,
}


def _shape(value, path: str):
    _expect(isinstance(value, dict), path, "expected an object")
    kind = _str(_get(value, "type", path), f"{path}.type")
    if kind == "box":
        return BoxShape(size=_vec(_get(value, "size", path), f"{path}.size", 3))
    if kind == "cylinder":
        return CylinderShape(
            radius=_num(_get(value, "radius", path), f"{path}.radius", lo=1e-6),
            height=_num(_get(value, "height", path), f"{path}.height", lo=1e-6),
        )
    raise ScenarioInvalid(f"{path}.type: unknown shape type {kind!r}")


@dataclass(frozen=True)
class SessionParams:
    """Episode-level knobs that are not part of the orchestrator policy."""

    timeout_s: float = 20.0
    escalation_threshold: int = 2
    max_repeats: int = 2
    min_standoff: float = 0.6
    frame_time_s: float = 0.6
    dt: float = 0.1
    time_cap_s: float = 600.0
    hint_interval_s: float = 30.0
    gesture_time_s: float = 2.0


@dataclass(frozen=True)
class NoiseParams:
    depth_sigma: float = 0.0
    pose_sigma: float = 0.0


def stamp_footprints(grid: OccupancyGrid, objects: list[SceneObject]) -> OccupancyGrid:
    """Occupancy grid for planning: the map plus furniture footprints.

    The render grid keeps only walls (so full-height wall boxes never hide
    tabletop objects); planning and collision instead use this grid, where
    every support's footprint is stamped Occupied.  A cell is stamped when
    its center lies inside the footprint.
    """
    cells = grid.cells.copy()
    res = grid.resolution
    ox, oy = grid.origin
    for obj in objects:
        if obj.kind is not ObjectKind.SUPPORT:
            continue
        lo, hi = obj.aabb()
        i0 = max(0, math.ceil((lo[0] - ox) / res - 0.5))
        i1 = min(grid.width - 1, math.floor((hi[0] - ox) / res - 0.5))
        j0 = max(0, math.ceil((lo[1] - oy) / res - 0.5))
        j1 = min(grid.height - 1, math.floor((hi[1] - oy) / res - 0.5))
        if i0 <= i1 and j0 <= j1:
            cells[j0 : j1 + 1, i0 : i1 + 1] = world.CellState.OCCUPIED
    return OccupancyGrid(cells=cells, resolution=res, origin=grid.origin)


@dataclass
class Scenario:
    """A validated scenario plus the raw bytes that define its hash."""

    name: str
    grid: OccupancyGrid
    nav_grid: OccupancyGrid
    rois: list[RegionOfInterest]
    bottle_candidates: list[tuple[float, float, float]]
    bottle_shape: CylinderShape
    objects: list[SceneObject]
    profile: usersim.UserProfile
    robot_start: tuple[float, float, float]
    camera_forward: float
    camera_height: float
    camera_pitch: float
    intrinsics: CameraIntrinsics
    detector: DetectorModel
    inflation_radius: float
    cost_decay: float
    robot_radius: float
    session: SessionParams
    noise: NoiseParams
    scenario_hash: str

    # ----- builders -------------------------------------------------------

    def camera_mount(self):
        return standard_camera_mount(
            (self.camera_forward, 0.0, self.camera_height), self.camera_pitch
        )

    def robot_state(self) -> RobotState:
        x, y, heading = self.robot_start
        return RobotState(
            x=x, y=y, heading=heading, camera_mount=self.camera_mount(),
            v_limit=2.0, omega_limit=3.0,
        )

    def build_scene(self, bottle_roi_index: int) -> Scene:
        """World with the pill bottle placed at the given region's candidate spot."""
        if not 0 <= bottle_roi_index < len(self.bottle_candidates):
            raise ValueError(
                f"bottle_roi_index {bottle_roi_index} out of range "
                f"0..{len(self.bottle_candidates) - 1}"
            )
        bottle = SceneObject(
            kind=ObjectKind.PILL_BOTTLE,
            position=self.bottle_candidates[bottle_roi_index],
            shape=self.bottle_shape,
            name="pill_bottle",
        )
        return Scene(grid=self.grid, objects=[bottle] + list(self.objects))

    def orchestrator_config(self, condition: str) -> OrchestratorConfig:
        return OrchestratorConfig(
            condition=condition,
            start_level=AssistLevel.L3 if condition == "B" else AssistLevel.L1,
            escalation_threshold=self.session.escalation_threshold,
            max_repeats=self.session.max_repeats,
            timeout_s=self.session.timeout_s,
            min_standoff=self.session.min_standoff,
            roi_ids=tuple(r.id for r in self.rois),
            roi_labels=tuple(r.label for r in self.rois),
        )


def _hash_bytes(scenario_json: bytes, map_bytes: bytes) -> str:
    digest = hashlib.sha256()
    digest.update(scenario_json)
    digest.update(b"\x00")
    digest.update(map_bytes)
    return digest.hexdigest()


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; the map path resolves next to it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"$: not valid JSON ({exc})") from exc
    _expect(isinstance(raw, dict), "$", "top level must be a JSON object")

    name = _str(_get(raw, "name", "$"), "$.name")
    map_rel = _str(_get(raw, "map", "$"), "$.map")
    map_path = path.parent / map_rel
    _expect(map_path.is_file(), "$.map", f"map file not found: {map_path}")
    map_bytes = map_path.read_bytes()
    try:
        grid = OccupancyGrid.from_ascii(map_bytes.decode("ascii"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ScenarioInvalid(f"$.map: {exc}") from exc

    profile_key = _str(_get(raw, "profile", "$"), "$.profile")
    _expect(
        profile_key in usersim.PROFILE_PRESETS,
        "$.profile",
        f"unknown profile {profile_key!r}; known: {sorted(usersim.PROFILE_PRESETS)}",
    )
    profile = usersim.PROFILE_PRESETS[profile_key]

    robot = _get(raw, "robot", "$")
    _expect(isinstance(robot, dict), "$.robot", "expected an object")
    rx = _num(_get(robot, "x", "$.robot"), "$.robot.x")
    ry = _num(_get(robot, "y", "$.robot"), "$.robot.y")
    rheading = math.radians(
        _num(_get(robot, "heading_deg", "$.robot", required=False, default=0.0), "$.robot.heading_deg")
    )
    _expect(
        grid.state_at(rx, ry) == world.CellState.FREE,
        "$.robot",
        f"start ({rx}, {ry}) is not in free space",
    )
    camera = _get(robot, "camera", "$.robot", required=False, default={})
    _expect(isinstance(camera, dict), "$.robot.camera", "expected an object")
    cam_forward = _num(_get(camera, "forward", "$.robot.camera", required=False, default=0.05), "$.robot.camera.forward")
    cam_height = _num(_get(camera, "height", "$.robot.camera", required=False, default=1.15), "$.robot.camera.height", lo=0.1)
    cam_pitch = math.radians(
        _num(_get(camera, "pitch_deg", "$.robot.camera", required=False, default=0.0), "$.robot.camera.pitch_deg")
    )

    intr = _get(raw, "intrinsics", "$")
    _expect(isinstance(intr, dict), "$.intrinsics", "expected an object")
    intrinsics = CameraIntrinsics(
        fx=_num(_get(intr, "fx", "$.intrinsics"), "$.intrinsics.fx", lo=1e-6),
        fy=_num(_get(intr, "fy", "$.intrinsics"), "$.intrinsics.fy", lo=1e-6),
        cx=_num(_get(intr, "cx", "$.intrinsics"), "$.intrinsics.cx"),
        cy=_num(_get(intr, "cy", "$.intrinsics"), "$.intrinsics.cy"),
        width=int(_num(_get(intr, "width", "$.intrinsics"), "$.intrinsics.width", lo=1)),
        height=int(_num(_get(intr, "height", "$.intrinsics"), "$.intrinsics.height", lo=1)),
    )

    det = _get(raw, "detector", "$", required=False, default={})
    _expect(isinstance(det, dict), "$.detector", "expected an object")
    detector = DetectorModel(
        true_positive_rate=_num(_get(det, "true_positive_rate", "$.detector", required=False, default=0.9), "$.detector.true_positive_rate", 0.0, 1.0),
        false_positive_rate=_num(_get(det, "false_positive_rate", "$.detector", required=False, default=0.02), "$.detector.false_positive_rate", 0.0, 1.0),
        box_noise_sigma=_num(_get(det, "box_noise_sigma", "$.detector", required=False, default=1.0), "$.detector.box_noise_sigma", lo=0.0),
        max_range=_num(_get(det, "max_range", "$.detector", required=False, default=4.0), "$.detector.max_range", lo=0.1),
    )

    rois_raw = _get(raw, "rois", "$")
    _expect(isinstance(rois_raw, list) and len(rois_raw) >= 1, "$.rois", "expected a non-empty array")
    rois: list[RegionOfInterest] = []
    seen_ids: set[str] = set()
    for i, r in enumerate(rois_raw):
        p = f"$.rois[{i}]"
        _expect(isinstance(r, dict), p, "expected an object")
        rid = _str(_get(r, "id", p), f"{p}.id")
        _expect(rid not in seen_ids, f"{p}.id", f"duplicate id {rid!r}")
        seen_ids.add(rid)
        label = _str(_get(r, "label", p), f"{p}.label")
        pose = _vec(_get(r, "pose", p), f"{p}.pose", 3)
        _expect(
            grid.state_at(pose[0], pose[1]) == world.CellState.FREE,
            f"{p}.pose",
            f"approach pose ({pose[0]}, {pose[1]}) is not in free space",
        )
        rois.append(
            RegionOfInterest(id=rid, pose=(pose[0], pose[1], math.radians(pose[2])), label=label)
        )

    cand_raw = _get(raw, "bottle_candidates", "$")
    _expect(
        isinstance(cand_raw, list) and len(cand_raw) == len(rois),
        "$.bottle_candidates",
        f"expected one [x, y, z] entry per region ({len(rois)})",
    )
    candidates = [_vec(c, f"$.bottle_candidates[{i}]", 3) for i, c in enumerate(cand_raw)]

    bottle_raw = _get(raw, "bottle", "$", required=False, default={})
    _expect(isinstance(bottle_raw, dict), "$.bottle", "expected an object")
    bottle_shape = CylinderShape(
        radius=_num(_get(bottle_raw, "radius", "$.bottle", required=False, default=0.035), "$.bottle.radius", lo=1e-3),
        height=_num(_get(bottle_raw, "height", "$.bottle", required=False, default=0.12), "$.bottle.height", lo=1e-3),
    )

    objects_raw = _get(raw, "objects", "$", required=False, default=[])
    _expect(isinstance(objects_raw, list), "$.objects", "expected an array")
    objects: list[SceneObject] = []
    for i, o in enumerate(objects_raw):
        p = f"$.objects[{i}]"
        _expect(isinstance(o, dict), p, "expected an object")
        kind_key = _str(_get(o, "kind", p), f"{p}.kind")
        _expect(kind_key in _OBJECT_KINDS, f"{p}.kind", f"unknown kind {kind_key!r}; known: {sorted(_OBJECT_KINDS)}")
        objects.append(
            SceneObject(
                kind=_OBJECT_KINDS[kind_key],
                position=_vec(_get(o, "position", p), f"{p}.position", 3),
                shape=_shape(_get(o, "shape", p), f"{p}.shape"),
                name=str(_get(o, "name", p, required=False, default=f"object_{i}")),
            )
        )

    nav = _get(raw, "nav", "$", required=False, default={})
    _expect(isinstance(nav, dict), "$.nav", "expected an object")
    inflation_radius = _num(_get(nav, "inflation_radius", "$.nav", required=False, default=0.45), "$.nav.inflation_radius", lo=0.0)
    cost_decay = _num(_get(nav, "cost_decay", "$.nav", required=False, default=1.0), "$.nav.cost_decay", lo=0.0)
    robot_radius = _num(_get(nav, "robot_radius", "$.nav", required=False, default=0.2), "$.nav.robot_radius", lo=0.0)

    sess = _get(raw, "session", "$", required=False, default={})
    _expect(isinstance(sess, dict), "$.session", "expected an object")
    session = SessionParams(
        timeout_s=_num(_get(sess, "timeout_s", "$.session", required=False, default=20.0), "$.session.timeout_s", lo=1.0),
        escalation_threshold=int(_num(_get(sess, "escalation_threshold", "$.session", required=False, default=2), "$.session.escalation_threshold", lo=1)),
        max_repeats=int(_num(_get(sess, "max_repeats", "$.session", required=False, default=2), "$.session.max_repeats", lo=0)),
        min_standoff=_num(_get(sess, "min_standoff", "$.session", required=False, default=0.6), "$.session.min_standoff", lo=0.0),
        frame_time_s=_num(_get(sess, "frame_time_s", "$.session", required=False, default=0.6), "$.session.frame_time_s", lo=0.0),
        dt=_num(_get(sess, "dt", "$.session", required=False, default=0.1), "$.session.dt", lo=1e-3),
        time_cap_s=_num(_get(sess, "time_cap_s", "$.session", required=False, default=600.0), "$.session.time_cap_s", lo=10.0),
        hint_interval_s=_num(_get(sess, "hint_interval_s", "$.session", required=False, default=30.0), "$.session.hint_interval_s", lo=1.0),
        gesture_time_s=_num(_get(sess, "gesture_time_s", "$.session", required=False, default=2.0), "$.session.gesture_time_s", lo=0.0),
    )

    noise_raw = _get(raw, "noise", "$", required=False, default={})
    _expect(isinstance(noise_raw, dict), "$.noise", "expected an object")
    noise = NoiseParams(
        depth_sigma=_num(_get(noise_raw, "depth_sigma", "$.noise", required=False, default=0.0), "$.noise.depth_sigma", lo=0.0),
        pose_sigma=_num(_get(noise_raw, "pose_sigma", "$.noise", required=False, default=0.0), "$.noise.pose_sigma", lo=0.0),
    )

    nav_grid = stamp_footprints(grid, objects)
    _expect(
        nav_grid.state_at(rx, ry) == world.CellState.FREE,
        "$.robot",
        f"start ({rx}, {ry}) collides with furniture",
    )
    for i, roi in enumerate(rois):
        _expect(
            nav_grid.state_at(roi.pose[0], roi.pose[1]) == world.CellState.FREE,
            f"$.rois[{i}].pose",
            "approach pose collides with furniture",
        )

    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return Scenario(
        name=name,
        grid=grid,
        nav_grid=nav_grid,
        rois=rois,
        bottle_candidates=candidates,
        bottle_shape=bottle_shape,
        objects=objects,
        profile=profile,
        robot_start=(rx, ry, rheading),
        camera_forward=cam_forward,
        camera_height=cam_height,
        camera_pitch=cam_pitch,
        intrinsics=intrinsics,
        detector=detector,
        inflation_radius=inflation_radius,
        cost_decay=cost_decay,
        robot_radius=robot_radius,
        session=session,
        noise=noise,
        scenario_hash=_hash_bytes(canonical, map_bytes),
    )
