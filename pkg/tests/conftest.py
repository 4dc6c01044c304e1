import pathlib

import pytest

from iasm.parser import parse_program, parse_scenario, parse_state
from iasm.syntax import desugar_reply_locations

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


def load_program(name: str):
    text = (FIXTURES / name).read_text()
    return desugar_reply_locations(parse_program(text, name))


def load_state(name: str, program):
    return parse_state((FIXTURES / name).read_text(), program.vocabulary, name)


def load_scenario(name: str):
    return parse_scenario((FIXTURES / name).read_text(), name)


@pytest.fixture(scope="session")
def timing():
    return load_program("timing.iasm")


@pytest.fixture(scope="session")
def kleene():
    return load_program("kleene.iasm")


@pytest.fixture(scope="session")
def kleene_or():
    return load_program("kleene_or.iasm")


@pytest.fixture(scope="session")
def issue_prog():
    return load_program("issue.iasm")


@pytest.fixture(scope="session")
def broker():
    return load_program("broker.iasm")


@pytest.fixture(scope="session")
def pollster():
    return load_program("pollster.iasm")
