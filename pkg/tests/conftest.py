import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def emit(number, title, ok, detail=""):
        line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" | {detail}" if detail else "")
        _LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
