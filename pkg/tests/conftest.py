import re

import pytest

# criterion number -> list of (name, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


_LAST = []


def record(number, name, passed, detail):
    ACCEPTANCE.setdefault(number, []).append((name, bool(passed), detail))
    _LAST[:] = [f"{name}: {detail}"]


def recorded_last():
    return _LAST[0] if _LAST else ""


def recorded(number):
    """Recorded lines of one criterion, for assertion messages."""
    return "; ".join(f"{name}: {detail}" for name, _, detail in ACCEPTANCE.get(number, []))


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"\d+", str(k)).group()), str(k))):
        for name, passed, detail in ACCEPTANCE[number]:
            tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
