import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# acceptance criterion id -> list of (passed, message)
ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record a pass/fail line for an acceptance criterion and echo it."""

    def _report(cid, passed, message):
        ACCEPTANCE.setdefault(cid, []).append((bool(passed), message))
        print(f"{cid} {'PASS' if passed else 'FAIL'}: {message}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[cid]
        ok = all(p for p, _ in entries)
        detail = "; ".join(m for _, m in entries)
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}: {detail}")
