import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def verdict(request):
    """Record a one-line PASS/FAIL summary for an acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[label] = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for label in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[label])
