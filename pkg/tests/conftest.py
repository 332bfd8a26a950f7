import pytest

VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Record and print one acceptance line, then fail the test if the criterion was not met."""

    def record(criterion: str, ok: bool, detail: str = ""):
        line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        request.config.stash.setdefault(VERDICTS, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s.split()[1].rstrip(":ab")), s)):
            terminalreporter.write_line(line)
