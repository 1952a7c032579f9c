"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""
import pytest

RESULTS_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[RESULTS_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    k = mark.args[0]
    res = item.config.stash[RESULTS_KEY].setdefault(k, {"ok": True, "details": []})
    res["ok"] = res["ok"] and rep.passed
    res["details"] += [v for name, v in item.user_properties if name == "detail"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[RESULTS_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        r = results[k]
        detail = "; ".join(r["details"])
        terminalreporter.write_line(f"CRITERION {k} {'PASS' if r['ok'] else 'FAIL'}"
                                    + (f"  {detail}" if detail else ""))
