import numpy as np
import pytest

from qradjust import SamplerConfig

# Short chains for unit tests; acceptance tests set their own budgets.
FAST = SamplerConfig(total_draws=600, burn_in=100, thin=5, seed=11)


@pytest.fixture
def fast_cfg():
    return FAST


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
