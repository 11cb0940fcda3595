import pytest

_VERDICTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one acceptance verdict."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        print(line)
        _VERDICTS.append((n, ok, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
