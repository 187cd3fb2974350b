import json
import math
import shutil
from pathlib import Path

import pytest

from aansim import scenario as sc
from aansim.world import CellState

from conftest import SCENARIO_PATH

MAP_PATH = SCENARIO_PATH.parent / "lab.map"


@pytest.fixture()
def workdir(tmp_path):
    shutil.copy(MAP_PATH, tmp_path / "lab.map")
    return tmp_path


def base_doc():
    return json.loads(SCENARIO_PATH.read_text())


def write_doc(workdir: Path, doc: dict) -> Path:
    path = workdir / "case.json"
    path.write_text(json.dumps(doc))
    return path


def load_errors(workdir, doc):
    with pytest.raises(sc.ScenarioInvalid) as exc:
        sc.load_scenario(write_doc(workdir, doc))
    return str(exc.value)


def test_reference_scenario_loads(lab_scenario):
    assert lab_scenario.name == "lab_study"
    assert len(lab_scenario.rois) == 3
    assert len(lab_scenario.bottle_candidates) == 3
    assert lab_scenario.profile.name == "misplaces"
    assert lab_scenario.grid.resolution == 0.1
    assert lab_scenario.session.timeout_s == 20.0
    assert lab_scenario.camera_pitch == pytest.approx(math.radians(-10.0))


def test_roi_headings_converted_to_radians(lab_scenario):
    assert lab_scenario.rois[0].pose[2] == pytest.approx(math.pi / 2)
    assert lab_scenario.rois[2].pose[2] == pytest.approx(-math.pi / 2)


def test_missing_field_error_names_json_path(workdir):
    doc = base_doc()
    del doc["robot"]["x"]
    msg = load_errors(workdir, doc)
    assert "$.robot.x" in msg


def test_bad_type_error_names_json_path(workdir):
    doc = base_doc()
    doc["detector"]["true_positive_rate"] = "very high"
    msg = load_errors(workdir, doc)
    assert "$.detector.true_positive_rate" in msg


def test_bad_roi_pose_error_names_indexed_path(workdir):
    doc = base_doc()
    doc["rois"][1]["pose"] = [1.0, 2.0]
    msg = load_errors(workdir, doc)
    assert "$.rois[1].pose" in msg


def test_unknown_object_kind_rejected(workdir):
    doc = base_doc()
    doc["objects"][0]["kind"] = "hologram"
    msg = load_errors(workdir, doc)
    assert "$.objects[0].kind" in msg
    assert "hologram" in msg


def test_unknown_profile_rejected(workdir):
    doc = base_doc()
    doc["profile"] = "superhuman"
    msg = load_errors(workdir, doc)
    assert "$.profile" in msg


def test_candidate_count_must_match_rois(workdir):
    doc = base_doc()
    doc["bottle_candidates"] = doc["bottle_candidates"][:2]
    msg = load_errors(workdir, doc)
    assert "$.bottle_candidates" in msg


def test_robot_start_must_be_free_of_furniture(workdir):
    doc = base_doc()
    doc["robot"]["x"], doc["robot"]["y"] = 1.5, 4.5  # inside the couch
    msg = load_errors(workdir, doc)
    assert "$.robot" in msg


def test_missing_map_file_reported(workdir):
    doc = base_doc()
    doc["map"] = "nowhere.map"
    msg = load_errors(workdir, doc)
    assert "nowhere.map" in msg


# ---------------------------------------------------------------------------
# Scenario hash


def test_hash_is_stable_across_loads(workdir):
    doc = base_doc()
    a = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    b = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    assert a == b
    assert len(a) == 64 and int(a, 16) >= 0


def test_hash_changes_with_json_content(workdir):
    doc = base_doc()
    a = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    doc["detector"]["true_positive_rate"] = 0.96
    b = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    assert a != b


def test_hash_changes_with_map_bytes(workdir):
    doc = base_doc()
    a = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    map_path = workdir / "lab.map"
    text = map_path.read_text().splitlines()
    # Flip one interior free cell to unknown: legal map, different bytes.
    row = list(text[40])
    assert row[50] == "."
    row[50] = "?"
    text[40] = "".join(row)
    map_path.write_text("\n".join(text) + "\n")
    b = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    assert a != b


def test_hash_ignores_json_whitespace(workdir):
    doc = base_doc()
    a = sc.load_scenario(write_doc(workdir, doc)).scenario_hash
    pretty = workdir / "pretty.json"
    pretty.write_text(json.dumps(doc, indent=4))
    b = sc.load_scenario(pretty).scenario_hash
    assert a == b


# ---------------------------------------------------------------------------
# Navigation grid stamping


def test_nav_grid_stamps_furniture_footprints(lab_scenario):
    grid = lab_scenario.grid
    nav = lab_scenario.nav_grid
    # The couch is invisible to the render grid but lethal for planning.
    assert grid.state_at(1.5, 4.5) is CellState.FREE
    assert nav.state_at(1.5, 4.5) is CellState.OCCUPIED
    # Cells outside every footprint are identical in both grids.
    assert nav.state_at(5.0, 1.0) is grid.state_at(5.0, 1.0) is CellState.FREE
    assert nav.state_at(0.05, 0.05) is CellState.OCCUPIED  # wall preserved


def test_nav_grid_footprint_uses_cell_centers():
    from aansim.world import BoxShape, ObjectKind, OccupancyGrid, SceneObject
    import numpy as np

    grid = OccupancyGrid(cells=np.zeros((10, 10), dtype=np.uint8), resolution=0.1)
    table = SceneObject(
        kind=ObjectKind.SUPPORT,
        position=(0.5, 0.5, 0.2),
        shape=BoxShape(size=(0.4, 0.2, 0.4)),
        name="t",
    )
    nav = sc.stamp_footprints(grid, [table])
    # Footprint x in [0.3, 0.7], y in [0.4, 0.6]: centers 0.35..0.65 x 0.45..0.55.
    occupied = {(i, j) for j in range(10) for i in range(10) if nav.cells[j, i]}
    assert occupied == {(i, j) for i in range(3, 7) for j in range(4, 6)}
    # The original grid is untouched.
    assert not grid.cells.any()


def test_build_scene_places_bottle_at_candidate(lab_scenario):
    scene = lab_scenario.build_scene(1)
    bottle = scene.objects[scene.pill_bottle_index()]
    assert bottle.position == tuple(lab_scenario.bottle_candidates[1])
    names = [o.name for o in scene.objects]
    assert "couch" in names and "coffee_cup" in names


def test_orchestrator_config_levels_per_condition(lab_scenario):
    from aansim.orchestrator import AssistLevel

    a = lab_scenario.orchestrator_config("A")
    b = lab_scenario.orchestrator_config("B")
    assert a.passive and not b.passive
    assert b.start_level is AssistLevel.L3
    assert a.roi_ids == b.roi_ids == tuple(r.id for r in lab_scenario.rois)
