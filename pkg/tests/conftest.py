import numpy as np
import pytest

# (p01, p11) in {0.05, ..., 0.95}^2
GRID = [round(0.05 * i, 2) for i in range(1, 20)]

_acceptance_lines = []


def record_criterion(number, title, ok, detail=""):
    _acceptance_lines.append(f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip())


@pytest.fixture
def report():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
