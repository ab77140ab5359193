import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selfcol import fixtures

settings.register_profile(
    "selfcol",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("selfcol")


@functools.lru_cache(maxsize=None)
def _cached(name):
    return getattr(fixtures, name)()


@pytest.fixture
def torus():
    return _cached("pinched_torus")


@pytest.fixture
def folded():
    return _cached("folded_sheet")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
