import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_acceptance_results: list[tuple[str, str]] = []


def record_acceptance(criterion: str, detail: str):
    _acceptance_results.append((criterion, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion, detail in _acceptance_results:
        terminalreporter.write_line(f"{criterion}: PASS — {detail}")
