import numpy as np
import pytest

from diffmpc import MpcAgent, SolverSettings, lti_ocp


@pytest.fixture(scope="session")
def lti():
    """Full-size learnable linear problem (paper configuration)."""
    return lti_ocp()


@pytest.fixture()
def lti_small():
    """Short-horizon variant for cheap unit tests."""
    return lti_ocp(N=6)


@pytest.fixture(scope="session")
def lti_agent():
    return MpcAgent(lti_ocp())


@pytest.fixture(scope="session")
def tight_settings():
    """Solver settings for finite-difference oracles (lower solve noise)."""
    return SolverSettings(kkt_tol=1e-12)


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow",
        action="store_true",
        default=False,
        help="skip the long-running acceptance criteria",
    )


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    marker = pytest.mark.skip(reason="--skip-slow given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(marker)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
