import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def circle_points(m: int, radius: float = 1.0, offset: float = 0.0) -> np.ndarray:
    t = 2 * np.pi * (np.arange(m) + offset) / m
    return np.c_[radius * np.cos(t), radius * np.sin(t)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register (number, passed, detail) here; printed after the run
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
