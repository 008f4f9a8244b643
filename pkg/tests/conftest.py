import json
from pathlib import Path

import pytest

from gaugetomo.scene import concentric_scene

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def annulus():
    return concentric_scene(2.0, 1.0)


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "oracle_values.json").read_text())
