from pathlib import Path

import numpy as np
import pytest

from densegame.config import get_settings

GAMES_DIR = Path(__file__).parent / "densegame" / "games"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def games_dir() -> Path:
    return GAMES_DIR


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
