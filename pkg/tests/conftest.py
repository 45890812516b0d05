import numpy as np
import pytest

from rissense import channel as ch
from rissense import geometry as geo
from rissense import ris


@pytest.fixture(scope="session")
def full_scene():
    return geo.SceneGeometry()


@pytest.fixture(scope="session")
def full_dictionary(full_scene):
    return ch.build_dictionary(full_scene, ris.StateTable(), ch.RadioParams())


@pytest.fixture(scope="session")
def small_scene():
    # 8x8 elements in 2x2 groups, 2x5x4 blocks (M = 40)
    return geo.SceneGeometry(ris_rows=8, ris_cols=8, group_rows=2, group_cols=2,
                             soi_extent=(0.4, 1.0, 0.8), block_counts=(2, 5, 4),
                             soi_origin=(1.0, -0.5, -0.4))


@pytest.fixture(scope="session")
def small_dictionary(small_scene):
    return ch.build_dictionary(small_scene, ris.StateTable(), ch.RadioParams())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get(
        "tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
