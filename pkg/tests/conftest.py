import json
from importlib import resources

import pytest

from qtperc.graph_model import parse_graph_spec

SPEC_NAMES = ["z1", "z2", "z2-anisotropic", "tree3", "triangular-3colour", "honeycomb"]


def load(name):
    text = resources.files("qtperc").joinpath("specs", f"{name}.json").read_text()
    return parse_graph_spec(json.loads(text))


@pytest.fixture(scope="session")
def specs():
    return {name: load(name) for name in SPEC_NAMES}


@pytest.fixture(scope="session")
def z1(specs):
    return specs["z1"]


@pytest.fixture(scope="session")
def z2(specs):
    return specs["z2"]


@pytest.fixture(scope="session")
def aniso(specs):
    return specs["z2-anisotropic"]


@pytest.fixture(scope="session")
def tree3(specs):
    return specs["tree3"]


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
