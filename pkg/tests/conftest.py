import numpy as np
import pytest
from hypothesis import strategies as st


def simplex_points(K, floor=1e-3):
    """Hypothesis strategy for probability vectors with every entry >= floor."""
    raw = st.lists(st.floats(0.01, 1.0), min_size=K, max_size=K)
    return raw.map(lambda v: floor + (1 - K * floor) * np.asarray(v) / np.sum(v))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"criterion {number} [{name}]: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
