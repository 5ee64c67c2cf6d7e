import pytest
from hypothesis import HealthCheck, settings

from urskyline import wine_fixture

settings.register_profile(
    "default", max_examples=1000, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def wine():
    return wine_fixture()


@pytest.fixture
def W(wine):
    return wine[0]


@pytest.fixture
def C3(wine):
    return wine[1]


# -- acceptance criteria run last and are summarised at the end -------------------


def pytest_collection_modifyitems(items):
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py")
               or it.fspath.basename == "test_acceptance.py")


def pytest_runtest_logreport(report):
    from helpers import PROPERTY_OUTCOMES

    if "test_properties.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        if report.when == "call" or report.nodeid not in PROPERTY_OUTCOMES:
            PROPERTY_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
