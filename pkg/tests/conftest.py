import pytest

VERDICTS: dict[int, bool] = {}


@pytest.fixture
def record():
    def _record(k: int, ok: bool) -> None:
        VERDICTS[k] = VERDICTS.get(k, True) and bool(ok)
        print(f"criterion {k}: {'PASS' if VERDICTS[k] else 'FAIL'}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if VERDICTS[k] else 'FAIL'}")
