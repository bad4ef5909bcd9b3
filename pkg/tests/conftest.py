import numpy as np
import pytest
from hypothesis import settings

from timeslice.classical import clear_table_cache

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True, scope="module")
def _fresh_tables():
    clear_table_cache()
    yield


def gaussian(x, x0=0.0, xi0=0.0, width=1.0):
    """L^2-normalized Gaussian wave packet."""
    return (np.pi * width**2) ** -0.25 * np.exp(-0.5 * ((x - x0) / width) ** 2 + 1j * xi0 * x)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


#: criterion number -> (passed, detail), filled by the acceptance tests
ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
