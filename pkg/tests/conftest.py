import sys
from pathlib import Path

# make the sibling helpers module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = report.nodeid.split("::")[-1]
    if "test_acceptance.py" in report.nodeid and name.startswith("test_criterion_"):
        number = int(name.split("_")[2])
        _criteria.setdefault(number, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status = "PASS" if all(_criteria[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}")
