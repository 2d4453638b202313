import pytest

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion; shown in the terminal summary."""

    def add(key, ok, detail):
        line = f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[key] = line
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(ACCEPTANCE[key])
