import pytest

_CRITERIA: dict = {}


class _Recorder:
    """Collects per-criterion outcomes; a criterion passes only if every recorded part passed."""

    def __call__(self, number: int, ok: bool, detail: str) -> bool:
        prev = _CRITERIA.get(number, (True, []))
        _CRITERIA[number] = (prev[0] and bool(ok), prev[1] + [detail])
        return bool(ok)


@pytest.fixture
def criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
