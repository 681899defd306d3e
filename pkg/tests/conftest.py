import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def calibration():
    """Calibrated iToffoli at J = 4.5 MHz, shared because it takes several seconds."""
    from spinqec.qec import pulse_calibration
    return pulse_calibration()


_ACCEPTANCE: list = []


@pytest.fixture
def report():
    """Record one acceptance line: report(number, ok, detail)."""
    def rec(n, ok, detail, seconds):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.2f} s]"
        _ACCEPTANCE.append((n, line))
        print(line)
        return ok
    return rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
