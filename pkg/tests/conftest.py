import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def load_truth(name):
    return json.loads((FIXTURES / f"{name}.truth.json").read_text())
