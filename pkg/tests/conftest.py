import pytest

ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(tag, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {tag}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
