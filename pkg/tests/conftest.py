from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

NETLISTS = Path(__file__).resolve().parent.parent / "netlists"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def netlists():
    return NETLISTS


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(request):
    """Record one pass/fail line for the acceptance summary and print it."""
    lines = request.config.stash[_LINES]

    def _report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
