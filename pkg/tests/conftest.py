import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = getattr(item, "criterion_detail", "")
    status = "PASS" if rep.passed else "FAIL"
    line = f"criterion {marker.args[0]:>2}: {status}  {marker.args[1]}"
    if detail:
        line += f"  [{detail}]"
    item.config.stash[_CRITERIA].append((marker.args[0], line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash[_CRITERIA])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in lines:
        terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Attach a short measured-value summary to the acceptance line of this test."""

    def _record(text: str) -> None:
        request.node.criterion_detail = text

    return _record
