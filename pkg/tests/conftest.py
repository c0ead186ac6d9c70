import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"

_acceptance: dict[str, str] = {}


@pytest.fixture
def small_corpus_dir():
    return DATA / "corpus_small"


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        label = {"PASSED": "PASS", "FAILED": "FAIL"}.get(outcome, outcome)
        terminalreporter.write_line(f"{label:<8} {name}")
