from pathlib import Path

import pytest

from predcacc import _backend

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "predcacc" / "scenarios"


@pytest.fixture(params=sorted(_backend.available()))
def backend(request):
    """Every importable kernel backend."""
    return request.param


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, collected from test user_properties."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            for key, value in getattr(rep, "user_properties", ()):
                if key == "acceptance":
                    lines.append((value, "PASS" if rep.passed else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for (num, title), verdict in sorted(lines):
            terminalreporter.write_line(f"criterion {num}: {verdict}  {title}")
