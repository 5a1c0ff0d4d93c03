import warnings

import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=200, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(autouse=True)
def _quiet_k_hat_zero():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="k_hat = 0")
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
