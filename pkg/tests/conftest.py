import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("fkit", deadline=None, max_examples=40)
settings.load_profile("fkit")

import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
