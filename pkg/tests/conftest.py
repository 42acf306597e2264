import pytest

from gridsplit import fixture_two_feeder, run


@pytest.fixture(scope="session")
def scenario():
    return fixture_two_feeder()


@pytest.fixture(scope="session")
def flex_run(scenario):
    return run(scenario, mode="flexible")


@pytest.fixture(scope="session")
def fixed_run(scenario):
    return run(scenario, mode="fixed")
