from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# criterion lines recorded by test_acceptance, echoed after the run
ACCEPTANCE_LINES: list = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def relocation_path():
    return SCENARIOS / "example_relocation.json"


@pytest.fixture
def unchanged_path():
    return SCENARIOS / "example_unchanged.json"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
