import numpy as np
import pytest

from fock_feedback.controller import ControlParams
from fock_feedback.fock import ModelParams, build_displacement_table
from fock_feedback.lyapunov import LyapunovParams


@pytest.fixture(scope="session")
def mp():
    return ModelParams(theta=0.25, phi=0.61, n_bar=2, n_max=40)


@pytest.fixture(scope="session")
def lp(mp):
    return LyapunovParams.build(mp)


@pytest.fixture(scope="session")
def table(mp):
    return build_displacement_table(mp.n_max, alpha_limit=1.0)


@pytest.fixture(scope="session")
def cp():
    return ControlParams(alpha_bar=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Records one pass/fail line per acceptance criterion for the terminal summary."""

    def emit(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash.setdefault(ACCEPTANCE, []).append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
