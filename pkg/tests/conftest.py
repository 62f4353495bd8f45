import pytest

_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line for an acceptance criterion and return its verdict."""

    def report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        _LINES.append((number, line))
        print(line)
        return ok

    return report


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long-running acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
