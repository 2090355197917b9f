import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
