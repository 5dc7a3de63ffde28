import numpy as np
import pytest

from nehari_cone.energy import EnergyModel
from nehari_cone.flow import dirichlet_limit_profile
from nehari_cone.nehari import minimize_on_nehari
from nehari_cone.params import RadialGrid, make_params

P_REF = 1.97

_criteria = []


@pytest.fixture(scope="session")
def grid():
    return RadialGrid.uniform(2048, 1)


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid.uniform(512, 1)


@pytest.fixture(scope="session")
def params40():
    return make_params(P_REF, 40.0, 1, 3.0)


@pytest.fixture(scope="session")
def model40(params40, grid):
    return EnergyModel(params40, grid)


@pytest.fixture(scope="session")
def G_discrete(model40):
    return dirichlet_limit_profile(model40)


@pytest.fixture(scope="session")
def ground40(params40, grid, G_discrete):
    return minimize_on_nehari(params40, 8, grid, G=G_discrete)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion.

    Usage: ``criterion(number, title, measured_text)`` before asserting; the
    outcome of the test decides PASS or FAIL in the terminal summary.
    """

    def record(number, title, measured=""):
        request.node.user_properties.append(("criterion", (number, title, measured)))

    return record


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "criterion":
            _criteria.append((value, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title, measured), outcome in sorted(_criteria, key=lambda x: x[0][0]):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}: {title}. {measured}")
