import math

import pytest

from sonicep import DopingProfile, ProblemSpec, make_grid, solve_cold
from sonicep.analysis import eta_star


def pure_bisection_phi_inverse(target: float, a: float) -> float:
    """Plain bisection for ln h + a/(2 h^2) = target on [1, inf); no Newton step."""
    lo, hi = 1.0, 2.0
    f = lambda h: math.log(h) + a / (2.0 * h * h) - target
    while f(hi) < 0.0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture(scope="session")
def baseline_problem() -> ProblemSpec:
    eta0 = eta_star(2.0, 1.0, 1.0, 0.5, 1.0) + 1.0
    return ProblemSpec(0.5, 1.0, 1.0, eta0, DopingProfile.constant(1.0), 2.0)


@pytest.fixture(scope="session")
def mild_problem() -> ProblemSpec:
    return ProblemSpec(0.5, 1.0, 1.0, 3.0)


@pytest.fixture(scope="session")
def baseline_report(baseline_problem):
    return solve_cold(baseline_problem, 0.5, make_grid(0.5, 800))


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}: {detail}")
