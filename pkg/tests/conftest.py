import numpy as np
import pytest

from riskaudit.data import SubgroupFilter
from riskaudit.synth import ScoreLaw, default_template, generate


@pytest.fixture(scope="session")
def calibrated_population():
    return generate(default_template(n=1200, seed=11))


@pytest.fixture(scope="session")
def biased_population():
    law = ScoreLaw("biased", SubgroupFilter.from_json([{"attr": "age", "ge": 60}]), logit_shift=1.0)
    return generate(default_template(n=2000, seed=5, law=law))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance criteria register one line each; printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
