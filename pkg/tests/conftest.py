"""Collects acceptance-criterion outcomes and prints one line per criterion at the end."""

import pytest

_verdicts = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _verdicts[n] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_verdicts):
        title, status, detail = _verdicts[n]
        line = f"[{status}] {n:>2}. {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
