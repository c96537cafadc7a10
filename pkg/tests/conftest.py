import os
from collections import defaultdict

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA: dict[str, int] = {}
_RESULTS: dict[int, list[tuple[str, str]]] = defaultdict(list)


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = int(mark.args[0])


def pytest_runtest_logreport(report):
    number = _CRITERIA.get(report.nodeid)
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        if hasattr(report, "wasxfail"):
            outcome = "xfail" if report.skipped else "xpass"
        else:
            outcome = report.outcome
        _RESULTS[number].append((report.nodeid.split("::")[-1], outcome))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        outcomes = _RESULTS[number]
        kinds = {o for _, o in outcomes}
        if kinds <= {"passed"}:
            verdict = "PASS"
        elif "failed" in kinds or "xpass" in kinds:
            verdict = "FAIL"
        elif kinds <= {"skipped"}:
            verdict = "SKIPPED"
        else:
            verdict = "PASS (with documented exceptions)" if "passed" in kinds else "FAIL (documented)"
        detail = ", ".join(f"{name}={o}" for name, o in outcomes if o != "passed")
        tr.write_line(f"criterion {number}: {verdict}" + (f"  [{detail}]" if detail else ""))
