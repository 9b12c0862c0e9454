import numpy as np
import pytest

from oplda.distlib import Lognormal, Poisson, RiskCell

# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ln_cell():
    """Poisson(10) x Lognormal(1, 2), the running example of the test suite."""
    return RiskCell("ln", Poisson(10.0), Lognormal(1.0, 2.0))


@pytest.fixture(scope="session")
def two_cells():
    return [
        RiskCell("z1", Poisson(5.0), Lognormal(1.0, 2.0)),
        RiskCell("z2", Poisson(10.0), Lognormal(1.0, 2.0)),
    ]
