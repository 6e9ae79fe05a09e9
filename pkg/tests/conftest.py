import numpy as np
import pytest

from svsensor import RadianceMap, SensorConfig


@pytest.fixture
def config():
    """The simulation-protocol sensor: 1000 e- well, 0.33/3.31 e- read
    noise, 12 bits, 5% black level, 0.5 um pitch, gains 1..27."""
    return SensorConfig()


@pytest.fixture
def quiet_config():
    """Noiseless variant for deterministic checks (quantization only)."""
    return SensorConfig(sigma_pre=0.0, sigma_post=0.0)


def uniform_scene(level, height=64, width=64):
    return RadianceMap(data=np.full((height, width), float(level)))


@pytest.fixture
def make_uniform():
    return uniform_scene
