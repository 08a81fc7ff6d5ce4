import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def ac_report(request):
    """Collects one verdict line per acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def record(tag: str, ok: bool, detail: str):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
