import math

import numpy as np
import pytest

from sonicep import (
    AssemblyError,
    ContinuationSchedule,
    NewtonOptions,
    ParameterError,
    ProblemSpec,
    SolutionFields,
    continuation_solve,
    default_init,
    make_grid,
    multi_start_uniqueness,
    newton_solve,
    solve_cold,
)
from sonicep.discretization import StateVector
from sonicep.manufactured import interpolant, sine_case, source_for
from sonicep.model import eval_phi
from sonicep.solver import eta1_guess, holder_exponent_fit, nu_bar_fit, perturbed_init
from sonicep.rng import SplitMix64


def test_default_init_peak(mild_problem):
    grid = make_grid(0.5, 4, min_cells=4)
    s = default_init(mild_problem, grid, 0.5)
    assert s.full_g()[2] == pytest.approx(1.5, abs=1e-15)


def test_eta1_guess_closed_form():
    p = ProblemSpec(0.5, 0.0, 1.0, 7.0)
    eta1 = eta1_guess(p)
    assert eval_phi(eta1, 1.0) == pytest.approx(eval_phi(7.0, 1.0) - 4 * math.log(0.5), abs=1e-12)


def test_default_init_zero_amplitude_is_feasible(mild_problem):
    grid = make_grid(0.5, 16)
    s = default_init(mild_problem, grid, 0.0)
    np.testing.assert_array_equal(s.g, 1.0)
    newton_solve(mild_problem, 0.5, grid, s, NewtonOptions(max_iterations=1))  # no AssemblyError


def test_newton_rejects_infeasible_init(mild_problem):
    grid = make_grid(0.5, 16)
    s = default_init(mild_problem, grid)
    s.g[3] = 0.5
    with pytest.raises(AssemblyError):
        newton_solve(mild_problem, 0.5, grid, s)


def test_newton_rejects_bad_k(mild_problem):
    grid = make_grid(0.5, 16)
    with pytest.raises(ParameterError):
        newton_solve(mild_problem, 1.0, grid, default_init(mild_problem, grid))


def test_baseline_newton(baseline_report, baseline_problem):
    rep = baseline_report
    assert rep.converged and rep.status == "converged"
    d = rep.diagnostics
    assert d["min_g_interior"] > 1.0
    assert d["min_m"] >= baseline_problem.m_lower + 3.0
    assert abs(d["c"]) <= 5e-4


def test_merit_decreases_monotonically(baseline_report):
    h = baseline_report.history
    assert all(b < a for a, b in zip(h, h[1:]))


@pytest.mark.parametrize("flux", ["mean", "potential"])
def test_manufactured_newton_converges_fast(flux):
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 200)
    case = sine_case(p)
    src = source_for(case, p, 0.5, grid)
    rep = newton_solve(p, 0.5, grid, interpolant(case, grid), NewtonOptions(flux=flux), source=src)
    assert rep.converged
    assert rep.iterations <= 6
    err = np.max(np.abs(rep.state.full_g() - case.g(grid.r)))
    assert err < 1e-3


def test_iteration_cap_reports_failure(mild_problem):
    grid = make_grid(0.5, 100)
    rep = newton_solve(mild_problem, 0.5, grid, default_init(mild_problem, grid), NewtonOptions(max_iterations=1))
    assert not rep.converged and rep.status == "failed"
    assert rep.cause == "iteration cap reached"


def test_solve_cold_bootstrap_large_grid(baseline_problem):
    rep = solve_cold(baseline_problem, 0.5, make_grid(0.5, 1600))
    assert rep.converged


def test_schedule_validation():
    with pytest.raises(ParameterError):
        ContinuationSchedule((0.5, 0.4))
    with pytest.raises(ParameterError):
        ContinuationSchedule(())
    with pytest.raises(ParameterError):
        ContinuationSchedule((0.5, 1.0))
    ks = ContinuationSchedule.default().ks
    assert ks[0] == 0.5 and ks[-1] == 1.0 - 1e-6
    assert all(b > a for a, b in zip(ks, ks[1:]))


def test_single_stage_schedule_equals_newton(mild_problem):
    grid = make_grid(0.5, 200)
    a = continuation_solve(mild_problem, grid, ContinuationSchedule((0.5,)))
    b = solve_cold(mild_problem, 0.5, grid)
    np.testing.assert_array_equal(a.state.to_vector(), b.state.to_vector())
    assert len(a.stages) == 1


def test_continuation_warm_start_cheaper(baseline_problem):
    grid = make_grid(0.5, 800)
    rep = continuation_solve(baseline_problem, grid, ContinuationSchedule((0.5, 0.75, 0.875)))
    assert rep.converged and rep.k == 0.875
    for st in rep.stages[1:]:
        cold = solve_cold(baseline_problem, st["k"], grid)
        assert st["iterations"] <= cold.iterations
    mins = [st["min_g_interior"] for st in rep.stages]
    assert all(v > 1.0 for v in mins)


def test_continuation_failure_returns_last_good(mild_problem):
    grid = make_grid(0.5, 100)
    start = solve_cold(mild_problem, 0.3, grid).state
    sched = ContinuationSchedule((0.3, 0.999999))
    rep = continuation_solve(mild_problem, grid, sched, NewtonOptions(max_iterations=2), init=start)
    assert rep.converged and rep.k == 0.3
    assert "k=0.999999" in rep.cause
    assert [st["converged"] for st in rep.stages] == [True, False]


def _fields(r, g):
    return SolutionFields(r=r, g=g, m=np.full_like(r, 3.0), eta1=3.0, E=np.zeros_like(r), rho=g / r**2,
                          n=3.0 / r**2, u=1.0 / g, v=np.full_like(r, 1 / 3.0))


def test_holder_fit_calibration():
    r = make_grid(0.5, 4000).r
    slope, res = holder_exponent_fit(_fields(r, 1.0 + (r - 0.5)), 0.5)
    assert slope == pytest.approx(1.0, abs=1e-9)
    slope, _ = holder_exponent_fit(_fields(r, 1.0 + np.sqrt(np.abs(1.0 - r))), 0.5, "right")
    assert slope == pytest.approx(0.5, abs=1e-9)


def test_holder_fit_too_few_nodes():
    r = make_grid(0.5, 8).r
    with pytest.raises(ParameterError):
        holder_exponent_fit(_fields(r, 1.0 + (r - 0.5)), 0.5)


def test_nu_bar_examples():
    r = make_grid(0.5, 100).r
    s = np.sin(np.pi * (r - 0.5) / 0.5)
    assert nu_bar_fit(_fields(r, 1.0 + 0.3 * s)) == pytest.approx(0.3, abs=1e-12)
    assert nu_bar_fit(_fields(r, np.ones_like(r))) == 0.0


def test_perturbed_init_feasible_and_deterministic(baseline_problem):
    grid = make_grid(0.5, 400)
    a = [perturbed_init(baseline_problem, grid, SplitMix64(42)).to_vector() for _ in range(2)]
    np.testing.assert_array_equal(a[0], a[1])
    rng = SplitMix64(7)
    for _ in range(50):
        s = perturbed_init(baseline_problem, grid, rng)
        assert np.all(s.g > 1.0) and np.all(s.m > 1.0)


def test_multi_start_single_seed_inconclusive(mild_problem):
    rep = multi_start_uniqueness(mild_problem, make_grid(0.5, 100), 0.5, 1, 0)
    assert rep.verdict == "inconclusive"


def test_multi_start_deterministic_and_thread_safe(mild_problem):
    grid = make_grid(0.5, 200)
    a = multi_start_uniqueness(mild_problem, grid, 0.5, 4, 99)
    b = multi_start_uniqueness(mild_problem, grid, 0.5, 4, 99, threads=3)
    assert a.summary() == b.summary()
    assert a.verdict == "unique-within-tol"
