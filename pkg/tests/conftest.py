"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line each."""

import pytest

_outcomes: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _outcomes.setdefault(number, {"title": title, "ok": True, "ran": False, "detail": []})
    if report.when == "call" or report.failed or report.skipped:
        entry["ran"] = entry["ran"] or report.when == "call"
        entry["ok"] = entry["ok"] and not report.failed and not report.skipped
        if report.when == "call":
            entry["detail"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        e = _outcomes[number]
        verdict = "PASS" if e["ok"] and e["ran"] else "FAIL"
        detail = f" ({'; '.join(e['detail'])})" if e["detail"] else ""
        terminalreporter.write_line(f"{verdict} criterion {number}: {e['title']}{detail}")
