import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ivregime.fixtures import spec_a, spec_b, spec_bin, spec_t  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def spec_a_():
    return spec_a()


@pytest.fixture
def spec_b_():
    return spec_b()


@pytest.fixture
def spec_t_():
    return spec_t()


@pytest.fixture
def spec_bin_():
    return spec_bin()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
