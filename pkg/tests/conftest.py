import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from arrayfeat.geometry import CameraModel, default_geometry


@pytest.fixture(scope="session")
def geom():
    return default_geometry()


@pytest.fixture(scope="session")
def cam():
    return CameraModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_acceptance_lines = {}


@pytest.fixture
def report(request):
    """Record a one-line pass/fail verdict for an acceptance criterion."""

    def _report(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _acceptance_lines[number] = line
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_acceptance_lines):
            terminalreporter.write_line(_acceptance_lines[number])
