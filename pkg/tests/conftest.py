import numpy as np
import pytest

from roughfilm.anisotropy import compute_general, compute_parallel
from roughfilm.cell_solver import build_mesh
from roughfilm.selftest import benchmark_geometries

CRITERIA_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class _Results:
    def __init__(self):
        self.geoms = benchmark_geometries()
        self._cache = {}

    def general(self, name):
        key = ("general", name)
        if key not in self._cache:
            self._cache[key] = compute_general(self.geoms[name])
        return self._cache[key]

    def parallel(self, name):
        key = ("parallel", name)
        if key not in self._cache:
            self._cache[key] = compute_parallel(self.geoms[name])
        return self._cache[key]

    def mesh(self, name):
        key = ("mesh", name)
        if key not in self._cache:
            self._cache[key] = build_mesh(self.geoms[name])
        return self._cache[key]


@pytest.fixture(scope="session")
def results():
    """Anisotropy tensors and meshes of the benchmark geometries, computed once."""
    return _Results()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
