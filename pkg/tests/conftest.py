import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from voxelcast.scene import VoxelGrid

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_grid(rng, shape=(16, 16, 16), density=0.15, origin=(-1.0, -1.0, -1.0), voxel_size=0.125):
    occ = rng.random(shape) < density
    colors = rng.random(shape + (3,))
    return VoxelGrid.from_arrays(occ, colors, origin, voxel_size)


def box_object(size=24, lo=(8, 0, 8), hi=(16, 10, 16), color=(0.9, 0.2, 0.2)):
    occ = np.zeros((size, size, size), dtype=bool)
    occ[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    colors = np.zeros(occ.shape + (3,))
    colors[occ] = color
    return VoxelGrid.from_arrays(occ, colors, origin=(-size / 32, 0.0, -size / 32), voxel_size=1 / 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
