import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = {}


@pytest.fixture
def record(request):
    """Attach a one-line measurement summary to the running test."""

    def _rec(text):
        request.node.user_properties.append(("detail", text))

    return _rec


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m or (report.when != "call" and not (report.when == "setup" and report.failed)):
        return
    detail = "; ".join(v for k, v in report.user_properties if k == "detail")
    _RESULTS[int(m.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        status, detail = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
