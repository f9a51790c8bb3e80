import numpy as np
import pytest

from rade.risk_model import init_params
from rade.runtime import EpisodeConfig, StaticWarmup
from rade.simulation import TrafficProcess


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def params():
    return init_params(np.random.default_rng(0))


@pytest.fixture
def small_cfg():
    """Short episode that still produces feedback in every domain."""
    return EpisodeConfig(traffic=TrafficProcess(40, 2.0), static_warmup=StaticWarmup(epochs=20))


_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[name] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        status, detail = _CRITERIA[name]
        number, label = name[len("test_criterion_"):].split("_", 1)
        terminalreporter.write_line(f"criterion {int(number):2d} {status}  {label.replace('_', ' ')}: {detail}")
