import numpy as np
import pytest

from expert_elicit.regression import kkt_residuals

ACCEPTANCE_LINES = []


def assert_kkt(data, fit, tol=1e-7):
    """KKT conditions of a converged pure-lasso fit, to 10x the sweep tolerance."""
    assert fit.converged
    assert fit.alpha == 1.0
    viol = kkt_residuals(data, fit)
    assert viol.max() < 10 * tol, f"KKT violation {viol.max():.3g}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
