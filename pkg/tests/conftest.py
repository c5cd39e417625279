import pytest

# (criterion number, title, "PASS"/"FAIL", detail) filled by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, verdict, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{verdict} [{num:2d}] {title}: {detail}")


@pytest.fixture
def record_criterion():
    return ACCEPTANCE_RESULTS
