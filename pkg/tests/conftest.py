import math

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def assert_within_sigmas(observed: float, expected: float, sigma: float, k: float = 4.0):
    assert abs(observed - expected) <= k * sigma, (
        f"{observed!r} vs {expected!r}: {abs(observed - expected) / sigma if sigma else math.inf:.2f} sigma"
    )


def rb_closed_form(theta: float) -> float:
    c4, s4 = math.cos(theta) ** 4, math.sin(theta) ** 4
    return s4 / (c4 + s4)


def accept_closed_form(theta: float) -> float:
    return math.cos(theta) ** 4 + math.sin(theta) ** 4


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
