import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    print(line)
    CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
