import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def coupling256():
    from ddpulse.engines import calibrate_coupling

    return calibrate_coupling(256)


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one acceptance-criterion outcome: ``report(k, passed, detail)``."""

    def record(k, passed, detail):
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[k] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
