import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
_LINES: list[str] = []


class AcceptanceRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def __call__(self, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} AC{self.number:02d} {self.title}: {detail}"
        _LINES.append(line)
        print(line)
        return passed


@pytest.fixture
def acceptance():
    return AcceptanceRecorder


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return ROOT / "fixtures"


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
