import numpy as np
import pytest
from scipy.spatial.transform import Rotation

ACCEPTANCE_LINES: list[str] = []


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def surface_patch(n=300, seed=0, scale=1.0):
    """Points on a smooth height field with no two points at equal spacing by accident."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    z = 0.3 * np.sin(2.0 * xy[:, 0]) * np.cos(1.5 * xy[:, 1]) + 0.15 * xy[:, 0] ** 2
    return scale * np.column_stack([xy, z])


def blob(n=400, seed=0, scale=1.0):
    """Closed bumpy surface, anisotropic enough to have a unique best alignment."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, 2 * np.pi, n)
    v = np.arccos(rng.uniform(-1, 1, n))
    r = 1 + 0.25 * np.cos(3 * u) * np.sin(2 * v) + 0.1 * np.sin(5 * v)
    return scale * np.column_stack([r * np.sin(v) * np.cos(u), 1.3 * r * np.cos(v), 0.8 * r * np.sin(v) * np.sin(u)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
