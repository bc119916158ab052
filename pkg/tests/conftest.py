import numpy as np
import pytest

from varmin.model import CATALOG, catalog_lookup

ACCEPTANCE_LINES = []

CATALOG_PARAMS = {
    "free_particle": {},
    "harmonic_oscillator": {"omega": 1.0},
    "anisotropic_quadratic": {"masses": [2.0, 0.5]},
    "mechanical": {"potential": "cos"},
}
CATALOG_DIMS = {"free_particle": 1, "harmonic_oscillator": 1, "anisotropic_quadratic": 2, "mechanical": 1}


def catalog_models():
    return [catalog_lookup(n, CATALOG_PARAMS[n], CATALOG_DIMS[n]) for n in CATALOG]


@pytest.fixture(params=CATALOG)
def catalog_model(request):
    return catalog_lookup(request.param, CATALOG_PARAMS[request.param], CATALOG_DIMS[request.param])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
