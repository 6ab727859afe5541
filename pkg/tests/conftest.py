import re
from pathlib import Path

import numpy as np
import pytest

from fbopt import ControllerConfig, DisturbanceSchedule, QuadraticCost, StateSpace

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MIMO_XSTAR = np.array([5.5652, 0.6087])
MIMO_K = [[0.0, 1.0], [0.25, -0.25]]


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def scalar_plant():
    return StateSpace([[-5.0]], [[1.0]], [[1.0]], [[0.0]])


@pytest.fixture
def scalar_cost():
    # (x - 10)^2
    return QuadraticCost([[2.0]], [-20.0], 100.0)


@pytest.fixture
def scalar_ctl():
    return ControllerConfig([[1.0]], [[1.0]], "phi1", rho=1.0)


@pytest.fixture
def mimo_plant():
    return StateSpace([[0.0, 1.0], [-10.0, -5.0]], [[1.0, 4.0], [1.0, 0.0]], [[1.0, 0.0]])


@pytest.fixture
def mimo_cost():
    return QuadraticCost([[1.0, 1 / 6], [1 / 6, 2 / 3]], [-17 / 3, -4 / 3])


@pytest.fixture
def mimo_ctl():
    return ControllerConfig(MIMO_K, MIMO_K, "phi1", rho=10.0, L_obs=[[1.0], [1.0]])


@pytest.fixture
def scalar_schedule():
    return DisturbanceSchedule([(0.0, [2.0]), (50.0, [-10.0])])


@pytest.fixture
def mimo_schedule():
    return DisturbanceSchedule([(0.0, [0.0, 0.0]), (75.0, [1.0, 1.0])])


def random_spd(rng, n, lo=0.2, hi=5.0):
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(lo, hi, n)
    Q = V @ np.diag(eig) @ V.T
    return 0.5 * (Q + Q.T)


def random_cost(rng, n):
    return QuadraticCost(random_spd(rng, n), rng.standard_normal(n) * 3)


# one pass/fail line per acceptance criterion, printed after the run

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_criteria = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if match is None:
        return
    num = int(match.group(1))
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    if report.when == "call" or report.failed:
        prev_ok = _criteria.get(num, (True, ""))[0]
        _criteria[num] = (prev_ok and report.passed, detail or _criteria.get(num, (0, ""))[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        ok, detail = _criteria[num]
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)
