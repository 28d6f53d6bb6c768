"""Shared fixtures and the acceptance summary printed at the end of a run."""
import numpy as np
import pytest

from cotdr.signal import BurstSpec, build_burst

# Filled by tests/test_acceptance.py: criterion number -> (passed, detail).
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def full_burst():
    """Full 100 us packet at 50 GS/s."""
    return build_burst(BurstSpec(), 50e9)


@pytest.fixture(scope="session")
def short_burst():
    """Same PRBS in a 2 us packet, for fast channel/correlator tests."""
    return build_burst(BurstSpec(packet_duration_ps=2e6), 50e9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
