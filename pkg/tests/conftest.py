import sys
from pathlib import Path

# make tests/oracles.py importable no matter where pytest is started from
sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = "test_acceptance.py::"
_lines: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if _ACCEPTANCE not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(report.user_properties).get("detail", "")
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        _lines[name] = f"{verdict}  {name:<30} {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _lines:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_lines):
        terminalreporter.write_line(_lines[name])
    passed = sum(line.startswith("PASS") for line in _lines.values())
    terminalreporter.write_line(f"{passed}/{len(_lines)} acceptance criteria passed")
