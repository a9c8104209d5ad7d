import numpy as np
import pytest

from rtheta.dynamics import SystemParams
from rtheta.planners import min_feasible_tf, sta_inputs
from rtheta.timeopt import OcpConfig, solve_time_optimal
from rtheta.trajectories import PolynomialProfile

START = (0.0, 1.0)
TARGET = (np.pi / 4, 4.0)
X_START = np.array([0.0, 1.0, 0.0, 0.0])
X_TARGET = np.array([np.pi / 4, 4.0, 0.0, 0.0])
# closed-form m g r sin(theta) at the target
E_TARGET = 20 * 9.8 * 4 * np.sin(np.pi / 4)


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def quintic_profile():
    return PolynomialProfile("quintic", START, TARGET, 4.0)


@pytest.fixture(scope="session")
def quintic_protocol(params, quintic_profile):
    return sta_inputs(params, quintic_profile)


@pytest.fixture(scope="session")
def seventh_tf(params):
    return min_feasible_tf(params, "seventh", START, TARGET)


@pytest.fixture(scope="session")
def seventh_profile():
    return PolynomialProfile("seventh", START, TARGET, 2.535)


@pytest.fixture(scope="session")
def seventh_protocol(params, seventh_profile):
    return sta_inputs(params, seventh_profile)


@pytest.fixture(scope="session")
def time_optimal(params):
    return solve_time_optimal(params, X_START, X_TARGET, OcpConfig())


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
