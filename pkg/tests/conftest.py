import pytest

from anonlog.fixtures import attack_suite
from anonlog.primitives import AnonKey

FIXED_KEY = AnonKey(bytes(range(32)), "main")


@pytest.fixture(scope="session")
def key():
    return FIXED_KEY


@pytest.fixture(scope="session")
def keys():
    return {"main": FIXED_KEY}


@pytest.fixture(scope="session")
def suite():
    return attack_suite()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
