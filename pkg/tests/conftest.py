import math
import sys

import pytest

from stwist.fields import Gains


@pytest.fixture
def example_gains():
    return Gains(1.0, 2.0)


@pytest.fixture
def ripple_T():
    return 0.25


def rel_close(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


TWO_PI = 2.0 * math.pi


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
