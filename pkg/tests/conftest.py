import pytest

# criterion number -> (title, passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number: int, title: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (title, bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}: {detail}")
