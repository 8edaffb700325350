"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

ACCEPTANCE: dict[int, tuple[bool, str, bool]] = {}


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str, gated: bool = True):
        ACCEPTANCE[number] = (bool(ok), detail, gated)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail, gated = ACCEPTANCE[number]
        status = "PASS" if ok else "FAIL"
        note = "" if gated else " (reported, not gated)"
        terminalreporter.write_line(f"criterion {number:2d}: {status}{note}  {detail}")
