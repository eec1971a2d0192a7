import numpy as np
import pytest

from cfmonitor.scenario import ScenarioRealization, SystemParams, draw_scenario


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def small_params():
    return SystemParams(M=3, N=4, Nt=3, Nr=2, tau=60, tau_r=8, tau_t=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def real(params):
    return draw_scenario(params, np.random.default_rng(7))


@pytest.fixture
def unit_real(small_params):
    """Unit large-scale gains and moderate SNRs: every term has the same scale."""
    M = small_params.M
    return ScenarioRealization.from_betas(
        small_params, beta_tr=1.0, beta_mr=np.ones(M), beta_tm=np.ones(M),
        beta_mm=np.ones((M, M)) - np.eye(M), rho_r=2.0, rho_t=3.0, rho_J=1.5)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def record_criterion(request):
    """Record one pass/fail line for the acceptance summary."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE].append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
