from pathlib import Path

import pytest

from aansim.scenario import Scenario, load_scenario

SCENARIO_PATH = Path(__file__).resolve().parent.parent / "scenarios" / "lab_study.json"


@pytest.fixture(scope="session")
def lab_scenario() -> Scenario:
    return load_scenario(SCENARIO_PATH)
