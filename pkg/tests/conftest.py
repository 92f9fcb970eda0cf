import numpy as np
import pytest

from tvnormal import charts, geometry


@pytest.fixture(scope="session")
def grid48():
    return geometry.make_grid(48, 96)


@pytest.fixture(scope="session")
def grid32():
    return geometry.make_grid(32, 64)


@pytest.fixture(scope="session")
def bumpy_chart():
    # mildly non-spherical star-shaped chart used by most derivative checks
    return charts.RadialChart.from_terms(1.0, [(2, 0, 0.12), (3, 2, 0.08), (4, -1, 0.05)])


@pytest.fixture(scope="session")
def bumpy_samples(bumpy_chart, grid48):
    return geometry.sample(bumpy_chart, grid48)


@pytest.fixture(scope="session")
def unit_sphere_samples(grid48):
    return geometry.sample(charts.SphereChart(1.0), grid48)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
