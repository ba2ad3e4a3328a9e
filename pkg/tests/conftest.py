"""Shared fixtures and the acceptance summary printed at the end of a run."""

import warnings

import pytest

ACCEPTANCE = {}


def record(criterion: int, name: str, passed: bool, detail: str = "") -> None:
    line = f"criterion {criterion:2d} [{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(autouse=True)
def _quiet_numba():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*TBB.*")
        yield
