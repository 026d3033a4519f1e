import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import gelkit as gk

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def mult():
    return gk.multiplicative()


@pytest.fixture(scope="session")
def bidi():
    return gk.bidisperse()


@pytest.fixture(scope="session")
def kac():
    return gk.kinetic_gas()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys as _sys

    mod = _sys.modules.get("test_acceptance") or _sys.modules.get(
        "tests.test_acceptance"
    )
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def assert_close(actual, expected, tol, label=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    err = float(np.max(np.abs(actual - expected)))
    assert err <= tol, f"{label}: |{actual} - {expected}| = {err} > {tol}"
