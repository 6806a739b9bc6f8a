import pytest

from gapmon import fixtures


@pytest.fixture
def m1():
    return fixtures.m1_bundle()


@pytest.fixture
def d1():
    return fixtures.response_monitor()


@pytest.fixture
def abcd():
    return fixtures.abcd_bundle()
