import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sphpsd import ArrayKind, FrequencyGrid, StftConfig, em32_geometry


@pytest.fixture(scope="session")
def rigid_array():
    return em32_geometry()


@pytest.fixture(scope="session")
def open_array():
    return em32_geometry(kind=ArrayKind.OPEN)


@pytest.fixture(scope="session")
def stft_config():
    return StftConfig()


@pytest.fixture(scope="session")
def grid(stft_config):
    return FrequencyGrid.from_stft(stft_config)
