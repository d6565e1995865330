from pathlib import Path

import pytest

from pxre.data import RelationInstance

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def hotel_instance() -> RelationInstance:
    return RelationInstance(
        id="e1",
        lang="en",
        tokens=("Terrorists", "started", "firing", "at", "the", "hotel", "."),
        subj_span=(0, 1),
        obj_span=(5, 6),
        label="PHYS:Located",
    )
