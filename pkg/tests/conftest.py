"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_outcomes: dict[str, dict] = {}


def _key(cid: str):
    digits = "".join(ch for ch in cid if ch.isdigit())
    return (int(digits or 0), cid)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when != "call" and not rep.failed and not rep.skipped:
        return
    cid, title = marker.args[0], marker.args[1]
    entry = _outcomes.setdefault(cid, {"title": title, "passed": True, "known": False})
    if rep.passed:
        return
    if rep.failed and "XPASS(strict)" in str(rep.longrepr):
        return
    entry["passed"] = False
    if hasattr(rep, "wasxfail"):
        entry["known"] = True


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_outcomes, key=_key):
        e = _outcomes[cid]
        status = "PASS" if e["passed"] else ("FAIL (known, xfail)" if e["known"] else "FAIL")
        terminalreporter.write_line(f"criterion {cid:<4} {status:<20} {e['title']}")
