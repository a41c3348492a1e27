import pytest

from pi_transfer.pendulum import ORIGINAL_PARAMS, original_context
from pi_transfer.policy import GridSpec, value_iteration

SMALL_GRID = GridSpec(n_theta=61, n_theta_dot=61)


@pytest.fixture(scope="session")
def c0():
    return original_context()


@pytest.fixture(scope="session")
def small_synthesis():
    """Coarse value iteration on the original context (fast, ~1 s)."""
    return value_iteration(ORIGINAL_PARAMS, SMALL_GRID)


@pytest.fixture(scope="session")
def small_policy(small_synthesis):
    return small_synthesis[1]


@pytest.fixture(scope="session")
def default_synthesis():
    """Value iteration at the default 301 x 301 resolution."""
    return value_iteration(ORIGINAL_PARAMS, GridSpec())


@pytest.fixture(scope="session")
def default_policy(default_synthesis):
    return default_synthesis[1]


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str) -> None:
        _CRITERIA[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
        print(_CRITERIA[number])
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
