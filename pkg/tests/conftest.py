import math

import numpy as np
import pytest

from freebound.radial import RadialGeometry, build_chart
from freebound.warp import make_preset

PRESET_NAMES = ("euclidean", "sphere", "gaussian-shrinker")


class Setup:
    def __init__(self, name):
        self.name = name
        self.profile = make_preset(name)
        self.geom = RadialGeometry(self.profile)
        self.chart = build_chart(self.profile)


_CACHE = {}


def setup_for(name):
    if name not in _CACHE:
        _CACHE[name] = Setup(name)
    return _CACHE[name]


@pytest.fixture(params=PRESET_NAMES)
def preset(request):
    return setup_for(request.param)


@pytest.fixture
def sphere():
    return setup_for("sphere")


@pytest.fixture
def euclid():
    return setup_for("euclidean")


@pytest.fixture
def gauss():
    return setup_for("gaussian-shrinker")


def gaussian_r_of_s(s):
    """Geodesic radius of chart radius s for rho = exp(-s^2/8)."""
    return math.sqrt(2 * math.pi) * math.erf(s / (2 * math.sqrt(2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ---------------------------------------------------------

CRITERIA_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    CRITERIA_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
