import pytest

_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(label, checks, seconds, budget):
        checks = dict(checks)
        checks["runtime"] = seconds < budget
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s of {budget:.0f}s)"
        if failed:
            line += " failed: " + ", ".join(failed)
        _LINES.append(line)
        print(line)
        return checks

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
