import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from shtrack.sh import Rotation3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng) -> Rotation3:
    # drawn independently of Rotation3.from_axis_angle
    m = ScipyRotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    u, _, vt = np.linalg.svd(m)
    return Rotation3(u @ vt)


def random_directions(rng, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arccos(np.clip(v[:, 2], -1, 1))
    phi = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
    return theta, phi, v


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
