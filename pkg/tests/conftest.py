import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import pytest

_VERDICTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion(capsys):
    """``criterion(n, ok, detail)`` records and prints one verdict line, then asserts."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append((n, bool(ok), line))
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
