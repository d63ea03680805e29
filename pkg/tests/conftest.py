import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria at desk scale")


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        num = int(name.split("_")[2])
        text = dict(report.user_properties).get("acceptance", "")
        _ACCEPTANCE.append((num, "PASS" if report.passed else "FAIL", text))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, text in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {text}")
