import pytest

_acceptance_lines = []


@pytest.fixture
def criterion_report():
    """Record and print one [PASS]/[FAIL] line per acceptance criterion."""

    def report(n, ok, detail=""):
        tag = "PASS" if ok else "FAIL"
        line = f"[{tag}] criterion-{n}" + (f": {detail}" if detail else "")
        _acceptance_lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
