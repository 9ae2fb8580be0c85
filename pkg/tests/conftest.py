import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_se(estimate: float, target: float, trials: int, k: float = 4.0) -> bool:
    """``|estimate - target| <= k`` standard errors of a proportion."""
    se = (max(target * (1 - target), 1e-12) / trials) ** 0.5
    return abs(estimate - target) <= k * se


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
