import json
from importlib import resources

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def feeder_scenario() -> dict:
    text = resources.files("seculex").joinpath("data/lv-feeder.json").read_text()
    return json.loads(text)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
