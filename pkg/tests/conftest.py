from pathlib import Path

import pytest

from mcfqkd import Scenario, calibrate_baseline

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def calibrated() -> Scenario:
    scenario, _ = calibrate_baseline(Scenario())
    return scenario


@pytest.fixture
def acceptance_report(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number: int, name: str, passed: bool, detail: str = "") -> None:
        lines.append((number, f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name}  {detail}".rstrip()))

    return report


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
