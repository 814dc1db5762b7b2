import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import compound_tails as ct

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def exp1():
    return ct.make_severity_exponential(1.0)


@pytest.fixture(scope="session")
def two_atoms():
    return ct.make_severity_bounded([(0.5, 0.5), (1.5, 0.5)])


@pytest.fixture(scope="session")
def pareto_sev():
    return ct.make_severity_pareto(2.5, 1.0)


@pytest.fixture(scope="session")
def weibull():
    return {b: ct.make_discretized_weibull(b) for b in (0.25, 0.3, 0.4, 0.45, 0.5, 0.55, 0.6)}


@pytest.fixture(scope="session")
def pareto15():
    return ct.make_pareto_count(1.5, 1.0)


@pytest.fixture(scope="session")
def geometric_half():
    return ct.make_geometric_count(0.5)


@pytest.fixture(scope="session")
def quake():
    return ct.make_mixed_poisson_earthquake(1.2, 1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion
# ---------------------------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    entry = item.config.stash[_CRITERIA].setdefault(number, {"title": title, "passed": 0, "failed": [], "skipped": 0})
    if rep.failed:
        entry["failed"].append(item.name)
    elif rep.skipped:
        entry["skipped"] += 1
    else:
        entry["passed"] += 1


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        e = results[number]
        if e["failed"]:
            status = f"FAIL ({', '.join(e['failed'])})"
        elif e["passed"]:
            status = f"PASS ({e['passed']} checks)"
        else:
            status = "SKIPPED"
        terminalreporter.write_line(f"criterion {number}: {e['title']}: {status}")
