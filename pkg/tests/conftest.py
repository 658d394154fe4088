import re
from contextlib import contextmanager

import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


def _order(tag):
    m = re.fullmatch(r"([A-Z])(\d+)", tag)
    return (m.group(1), int(m.group(2))) if m else (tag, 0)


def _record(tag, ok, description, notes):
    line = description + (f" [{'; '.join(notes)}]" if notes else "")
    _RESULTS[tag] = (ok, line)
    print(f"{tag} {'PASS' if ok else 'FAIL'} {line}")


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextmanager
    def _check(tag, description):
        notes: list[str] = []
        try:
            yield notes
        except BaseException:
            _record(tag, False, description, notes)
            raise
        _record(tag, True, description, notes)

    return _check


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_RESULTS, key=_order):
        ok, description = _RESULTS[tag]
        terminalreporter.write_line(f"{tag:<4} {'PASS' if ok else 'FAIL'}  {description}")
