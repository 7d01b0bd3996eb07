"""Shared fixtures: acceptance verdict collection."""

import pytest

_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record ``(number, passed, detail, part)`` for the acceptance summary and echo it."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number: int, passed: bool, detail: str, part: str = "") -> bool:
        name = f"{number:>2}{part}"
        line = f"criterion {name}: {'PASS' if passed else 'FAIL'}  {detail}"
        store[(number, part)] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
