import pytest

from lieforge import catalog as C
from lieforge.audit import GENERATOR_NAMES
from lieforge.config import load_config
from lieforge.expr import jet
from lieforge.fixtures import FixtureSet
from lieforge.lie import determining_system


@pytest.fixture(scope="session")
def fixtures():
    return FixtureSet()


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def cbs_system():
    return determining_system(C.build_pde(), C.INDEP, C.DEP, jet(C.DEP, "x", "t"), GENERATOR_NAMES)
