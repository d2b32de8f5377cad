import time

import pytest

from integrated_quantiles.simulation import (
    DesignSpec,
    ProbabilityModel,
    SimConfig,
    SuperpopulationSpec,
    run_monte_carlo,
)

# Normal(0, 1) values, pi = 0.5, delta ~ Bernoulli(0.5) independent of X.
NORMAL_STUDY = SimConfig(
    SuperpopulationSpec.normal(),
    DesignSpec(ProbabilityModel.constant(0.5), ProbabilityModel.constant(0.5)),
    n=10_000,
    replications=2000,
    seed=20231,
)


@pytest.fixture(scope="session")
def normal_study():
    start = time.perf_counter()
    result = run_monte_carlo(NORMAL_STUDY)
    result.elapsed = time.perf_counter() - start
    return result


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when == "call" or report.outcome != "passed":
        _acceptance.setdefault(name, report.outcome)
        if report.outcome != "passed":
            _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items(), key=lambda kv: int(kv[0].split("_")[1][2:])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
