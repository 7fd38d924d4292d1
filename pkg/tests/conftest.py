from fractions import Fraction

import pytest
from hypothesis import settings

from walkmax.model import Scenario, validate_params

settings.register_profile("walkmax", deadline=None, max_examples=60)
settings.load_profile("walkmax")

P_SET = ["1/5", "1/4", "1/3", "3/7", "1/8"]
TRAFFIC_P_SET = ["1/5", "1/3"]

EXACT_SCENARIOS = {
    "strong": Scenario.strong(),
    "weak": Scenario.weak(),
    "traffic": Scenario.traffic(),
    "traffic-block-end": Scenario.traffic(convention="block-end"),
}


@pytest.fixture(params=list(EXACT_SCENARIOS), ids=list(EXACT_SCENARIOS))
def scenario(request):
    return EXACT_SCENARIOS[request.param]


@pytest.fixture(params=P_SET)
def params(request):
    return validate_params(request.param)


def third():
    return validate_params(Fraction(1, 3))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
