import numpy as np
import pytest

from cubesolve.core import MaskStack, Measurement, SpectralCube, WavelengthGrid


def random_masks(rng: np.random.Generator, width: int, height: int, bands: int,
                 lo: float = 0.05, hi: float = 0.95) -> MaskStack:
    grid = WavelengthGrid(450.0, 10.0, bands)
    values = rng.uniform(lo, hi, size=(height, width, bands))
    return MaskStack(values=values, grid=grid)


def random_cube(rng: np.random.Generator, width: int, height: int, bands: int) -> SpectralCube:
    grid = WavelengthGrid(450.0, 10.0, bands)
    values = rng.uniform(0.0, 1.0, size=(height, width, bands))
    return SpectralCube(values=values, grid=grid)


def random_measurement(rng: np.random.Generator, width: int, height: int) -> Measurement:
    return Measurement(values=rng.uniform(0.0, 10.0, size=(height, width)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
