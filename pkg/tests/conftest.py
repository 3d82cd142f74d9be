"""Collects one pass/fail line per acceptance criterion and prints them at the end."""
import pytest

_LINES: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion the test checks")
    config.addinivalue_line("markers", "acceptance: long-running acceptance gate")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _LINES[marker.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_LINES, key=lambda c: int(c[1:])):
        status, detail = _LINES[cid]
        terminalreporter.write_line(f"{cid} {status}  {detail}")
