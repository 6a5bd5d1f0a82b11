import sys

import numpy as np
import pytest

from beacon.harness import SyntheticSpec, gen_synthetic


@pytest.fixture(scope="session")
def default_suite():
    """The frozen 10-seed synthetic suite, generated once per session.

    Returns a list of (w, x, x_tilde) float32 triples for seeds 42..51.
    """
    return [gen_synthetic(SyntheticSpec(seed=s)) for s in range(42, 52)]


@pytest.fixture()
def rng():
    return np.random.default_rng(20240814)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Repeat the acceptance verdicts where they are visible even when the
    # per-test output is captured.
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", []) if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
