import pytest

ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_log():
    def record(number: int, ok: bool, detail: str) -> str:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    seen = set()
    for number, line in sorted(ACCEPTANCE_LINES):
        if line not in seen:
            seen.add(line)
            terminalreporter.write_line(line)
