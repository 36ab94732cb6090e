from __future__ import annotations

from pathlib import Path

import pytest

from guided_bands.graph import GuidedPotential, build_cylinder, load_file

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
ALL_CONFIGS = sorted(p.name for p in CONFIGS.glob("*.json"))

# criterion lines collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def load(name):
    spec = load_file(CONFIGS / name)
    return spec, build_cylinder(spec), GuidedPotential.from_spec(spec)


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
