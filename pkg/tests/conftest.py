import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from youngreg.fbm import HurstParams, sample_path

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bm_path():
    return sample_path(HurstParams(0.5, 1, 2**10, 11))


@pytest.fixture(scope="session")
def rough_path_2d():
    return sample_path(HurstParams(0.3, 2, 2**9, 5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line: verdict(label, passed, detail)."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[label] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[ACCEPTANCE_KEY]
    if lines:
        terminalreporter.section("acceptance criteria")
        for label in sorted(lines, key=lambda s: (int(s.split()[1].rstrip("abc:")), s)):
            terminalreporter.write_line(lines[label])
