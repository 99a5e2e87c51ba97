import pytest

# (number, title, passed, seconds, detail) for each acceptance criterion that ran
_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds, detail in sorted(_ACCEPTANCE):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict} [{number}] {title} ({seconds:.2f} s): {detail}")
