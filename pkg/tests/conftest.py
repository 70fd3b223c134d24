import time

import pytest
from hypothesis import HealthCheck, settings

from amser import harness

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def config():
    return harness.load_config()


@pytest.fixture(scope="session")
def pain_catalog():
    return harness.load_catalog("pain")


@pytest.fixture(scope="session")
def stress_catalog():
    return harness.load_catalog("stress")


@pytest.fixture(scope="session")
def pools(config):
    out, timing = {}, {}
    for app in harness.APPLICATIONS:
        t = time.perf_counter()
        out[app] = harness.train_pool(app, config)
        timing[app] = time.perf_counter() - t
    out["_train_seconds"] = timing
    return out


@pytest.fixture(scope="session")
def contexts(config, pools):
    return {app: harness.make_context(app, config, pools[app], harness.load_calibration(app))
            for app in harness.APPLICATIONS}


@pytest.fixture(scope="session")
def suites(config, pools, contexts):
    """Both shipped suites at the configured seed count (30), with wall-clock time."""
    out = {}
    for app in harness.APPLICATIONS:
        t = time.perf_counter()
        suite = harness.run_suite(app, contexts[app], config)
        out[app] = (suite, time.perf_counter() - t + pools["_train_seconds"][app])
    return out


@pytest.fixture
def acceptance_line():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
