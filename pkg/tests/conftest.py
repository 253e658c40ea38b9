import pytest

_criteria = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; returns ``ok`` so tests can ``assert record(...)``."""

    def record(name: str, ok: bool, detail: str) -> bool:
        _criteria.append((name, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
