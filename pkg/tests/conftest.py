import math

import numpy as np
import pytest

from liepid import GroupElement, GroupId, exp_map

Q0 = np.array([[-1.0, 2.0, 2.0], [2.0, -1.0, 2.0], [2.0, 2.0, -1.0]]) / 3.0
BIAS = np.array([0.01, 0.02, 0.03])


def series_expm(a: np.ndarray, terms: int = 40) -> np.ndarray:
    """Taylor-series matrix exponential, used as an independent oracle."""
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def random_rotation(rng: np.random.Generator, max_angle: float = math.pi - 0.01) -> GroupElement:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_map(axis * rng.uniform(0.0, max_angle))


def random_element(rng: np.random.Generator, group: GroupId, scale: float = 2.0) -> GroupElement:
    r = random_rotation(rng)
    if group is GroupId.SO3:
        return r
    return GroupElement.from_rotation(r.matrix, rng.uniform(-scale, scale, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


_ACCEPTANCE_LINES: list[str] = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _ACCEPTANCE_LINES.extend(line for line in report.capstdout.splitlines()
                                 if line.startswith(("PASS criterion", "FAIL criterion")))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
