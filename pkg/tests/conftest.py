import pytest

# acceptance criteria register their outcome here; printed after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record(number: int, title: str, outcome: str):
    ACCEPTANCE[number] = (title, outcome)


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, outcome = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {outcome.upper():4s}  {title}")
