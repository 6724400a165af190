from dataclasses import dataclass

import numpy as np
import pytest

from suspflow.flow import BaseMap, FlowSystem
from suspflow.profiles import PowerBump, TimeProfile, UnitProfile


@dataclass(frozen=True)
class ConstantProfile(TimeProfile):
    """alpha == value everywhere; test-only (not one outside the slow ball)."""

    value: float = 0.5
    kind = "constant"
    outer_radius = float("inf")

    def _eval(self, r):
        return np.full_like(r, self.value)


@pytest.fixture
def base4():
    return BaseMap.default(4)


@pytest.fixture
def unit_sys(base4):
    return FlowSystem(base4, UnitProfile())


@pytest.fixture
def power_sys(base4):
    def make(ell):
        return FlowSystem(base4, PowerBump(ell))
    return make


@pytest.fixture
def half_speed_sys(base4):
    return FlowSystem(base4, ConstantProfile(0.5), strict=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
