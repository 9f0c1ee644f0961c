import re

CRITERIA = {
    1: "mocked end-to-end dry run",
    2: "ROUGE-L matches reference implementation",
    3: "plurality voting over candidate answers",
    4: "sandbox containment probes",
    5: "dataset filter soundness",
    6: "serialization round trip",
    7: "deterministic reruns",
}

_PAT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results: dict[int, bool] = {}


def pytest_runtest_logreport(report):
    m = _PAT.search(report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    if report.when == "call":
        ok = report.passed
    elif report.failed:
        ok = False
    else:
        return
    _results[num] = _results.get(num, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        status = "PASS" if _results[num] else "FAIL"
        label = CRITERIA.get(num, "")
        terminalreporter.write_line(f"criterion {num}: {label} ... {status}")
