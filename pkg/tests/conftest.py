from pathlib import Path

import pytest

from vluprobe.providers import MockProvider

FIXTURES = Path(__file__).parent / "fixtures"
GOLDENS = Path(__file__).parent / "goldens"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def goldens() -> Path:
    return GOLDENS


@pytest.fixture
def mock() -> MockProvider:
    return MockProvider(dim=8, seed=0)
