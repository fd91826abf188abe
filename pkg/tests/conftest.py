import pytest

from late_engine import enumerate_cells, load_fixture


@pytest.fixture(scope="session")
def p1():
    return load_fixture("p1")


@pytest.fixture(scope="session")
def p2():
    return load_fixture("p2")


@pytest.fixture(scope="session")
def p3():
    return load_fixture("p3")


@pytest.fixture(scope="session")
def p1_cells(p1):
    return enumerate_cells(p1)


@pytest.fixture(scope="session")
def p2_cells(p2):
    return enumerate_cells(p2)


@pytest.fixture(scope="session")
def p3_cells(p3):
    return enumerate_cells(p3)
