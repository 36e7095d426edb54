import time
from contextlib import contextmanager

import pytest

_CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"passed": True, "seconds": 0.0})
    if rep.failed:
        entry["passed"] = False
    if rep.when == "call":
        entry["seconds"] += rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, entry in _CRITERIA.items():
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  ({entry['seconds']:.1f} s)")


@pytest.fixture
def budget():
    """``with budget(seconds): ...`` fails the test if the block runs too long."""

    @contextmanager
    def limit(seconds):
        start = time.perf_counter()
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < seconds, f"took {elapsed:.1f} s, budget {seconds} s"

    return limit
