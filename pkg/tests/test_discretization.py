import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sonicep import AssemblyError, DopingProfile, ParameterError, ProblemSpec, make_grid, quadrature, solve_cold
from sonicep.discretization import (
    StateVector,
    assemble_jacobian,
    assemble_residual,
    constraint_value,
    first_integral_c,
    pointwise_identity_residual,
    weak_form_defects,
    weak_form_residual,
)
from sonicep.manufactured import exact_rows, interpolant, sine_case, truncation_error
from sonicep.model import dphi
from sonicep.rng import SplitMix64
from sonicep.verify import jacobian_fd_error, random_state


# ---------------------------------------------------------------- grid


def test_make_grid_small_example():
    g = make_grid(0.5, 4, min_cells=4)
    np.testing.assert_array_equal(g.r, [0.5, 0.625, 0.75, 0.875, 1.0])


@pytest.mark.parametrize("eps0, N, h", [(0.5, 8, 0.0625), (0.9, 10, 0.01)])
def test_make_grid_spacing(eps0, N, h):
    g = make_grid(eps0, N)
    assert g.h == pytest.approx(h, rel=1e-14)
    assert g.r[0] == eps0 and g.r[-1] == 1.0
    assert np.all(np.diff(g.r) > 0)


@pytest.mark.parametrize("eps0, N", [(0.0, 10), (1.0, 10), (0.5, 7), (0.5, 10.5)])
def test_make_grid_rejects(eps0, N):
    with pytest.raises(ParameterError):
        make_grid(eps0, N)


# ---------------------------------------------------------------- quadrature


def test_quadrature_examples():
    g = make_grid(0.5, 8)
    assert quadrature(np.ones(9), g) == pytest.approx(0.5, abs=1e-15)
    assert quadrature(g.r, g) == pytest.approx(0.375, abs=1e-15)


def test_quadrature_order():
    exact = (1.0 - 0.125) / 3.0
    e8 = abs(quadrature(make_grid(0.5, 8).r ** 2, make_grid(0.5, 8)) - exact)
    e16 = abs(quadrature(make_grid(0.5, 16).r ** 2, make_grid(0.5, 16)) - exact)
    assert e8 / e16 == pytest.approx(4.0, rel=1e-6)


def test_quadrature_length_mismatch():
    with pytest.raises(ParameterError):
        quadrature(np.ones(5), make_grid(0.5, 8))


# ---------------------------------------------------------------- residual


def test_constant_state_zero_electron_row():
    eta0 = 1.5
    p = ProblemSpec(0.5, 0.0, 1.0, eta0, DopingProfile.constant(3.0 - eta0))
    grid = make_grid(0.5, 16)
    s = StateVector(np.ones(15), np.full(16, eta0))
    R = assemble_residual(s, p, 0.5, grid)
    np.testing.assert_allclose(R.electron, 0.0, atol=1e-15)


def test_constraint_row_without_relaxation():
    p = ProblemSpec(0.5, 0.0, 1.0, 3.0)
    grid = make_grid(0.5, 16)
    rng = SplitMix64(3)
    s = random_state(p, 16, 0.5, rng)
    R = assemble_residual(s, p, 0.5, grid)
    expected = math.log(s.eta1) + 0.5 / s.eta1**2 - (math.log(3.0) + 0.5 / 9.0) + 4.0 * math.log(0.5)
    assert R.constraint == pytest.approx(expected, abs=1e-13)


def test_infeasible_state_names_node():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 10)
    g = np.full(9, 1.5)
    g[4] = 0.5  # below sqrt(0.5)
    with pytest.raises(AssemblyError) as info:
        assemble_residual(StateVector(g, np.full(10, 3.0)), p, 0.5, grid)
    assert info.value.node == 5 and info.value.field == "g"
    with pytest.raises(AssemblyError) as info:
        assemble_residual(StateVector(np.full(9, 1.5), np.r_[np.full(9, 3.0), 0.9]), p, 0.5, grid)
    assert info.value.node == 10 and info.value.field == "m"


@pytest.mark.parametrize("flux", ["mean", "potential"])
def test_manufactured_order_two(flux):
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    case = sine_case(p)
    errs = [truncation_error(case, p, 0.5, make_grid(0.5, N), flux=flux) for N in (100, 200, 400)]
    for a, b in zip(errs, errs[1:]):
        for species in range(3):
            assert 3.4 <= a[species] / b[species] <= 4.6


def test_manufactured_rows_match_sympy():
    p = ProblemSpec(0.5, 0.7, 0.8, 3.0, DopingProfile.constant(1.3))
    k = 0.6
    r = sp.symbols("r", positive=True)
    e, j, th, eta0, B = sp.Rational(1, 2), sp.Rational(4, 5), sp.Rational(7, 10), 3, sp.Rational(13, 10)
    g = 1 + sp.sin(sp.pi * (r - e) / (1 - e))
    m = eta0 * (1 + (1 - sp.cos(sp.pi * (r - e) / (1 - e))) / 4)
    ae, ah = sp.Rational(3, 5) * j**2, j**2
    e_row = sp.diff(r**2 * (1 / g - ae / g**3) * sp.diff(g, r), r) + sp.diff(th * j * r**2 / g, r) - (g - m - B + 2)
    h_row = sp.diff(r**2 * (1 / m - ah / m**3) * sp.diff(m, r), r) - sp.diff(th * j * r**2 / m, r) - (m + B - g + 2)
    fe, fh = sp.lambdify(r, e_row, "numpy"), sp.lambdify(r, h_row, "numpy")
    rr = np.linspace(0.5, 1.0, 23)
    ne, nh = exact_rows(sine_case(p), p, k, rr)
    np.testing.assert_allclose(ne, fe(rr), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(nh, fh(rr), rtol=1e-12, atol=1e-12)


def test_conservation_telescopes():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 20)
    s = random_state(p, 20, 0.5, SplitMix64(11))
    R = assemble_residual(s, p, 0.5, grid)
    g, m, r, rh, h = s.full_g(), s.full_m(p.eta0), grid.r, grid.r_half, grid.h
    gb = 0.5 * (g[1:] + g[:-1])
    F = rh**2 * dphi(gb, 0.5) * np.diff(g) / h
    P = rh**2 / gb
    react = g[1:-1] - m[1:-1] - p.B(r[1:-1]) + 2.0
    total = (F[-1] - F[0]) + (P[-1] - P[0]) - h * react.sum()
    assert h * R.electron.sum() == pytest.approx(total, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- Jacobian


@pytest.mark.parametrize("flux", ["mean", "potential"])
@pytest.mark.parametrize("theta", [0.0, 1.0])
@pytest.mark.parametrize("j", [1.0, 0.3])
def test_jacobian_matches_finite_differences(flux, theta, j):
    p = ProblemSpec(0.5, theta, j, 3.0, DopingProfile.piecewise_linear([0.5, 1.0], [1.0, 2.0]))
    grid = make_grid(0.5, 10)
    rng = SplitMix64(5)
    for _ in range(5):
        assert jacobian_fd_error(random_state(p, 10, 0.5, rng), p, 0.5, grid, flux=flux) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), k=st.floats(0.1, 0.99))
def test_jacobian_fd_property(seed, k):
    p = ProblemSpec(0.5, 1.0, 1.0, 4.0)
    grid = make_grid(0.5, 8)
    assert jacobian_fd_error(random_state(p, 8, k, SplitMix64(seed)), p, k, grid) <= 1e-6


def test_border_row_decouples_without_relaxation():
    p = ProblemSpec(0.5, 0.0, 1.0, 3.0)
    grid = make_grid(0.5, 10)
    s = random_state(p, 10, 0.5, SplitMix64(2))
    J = assemble_jacobian(s, p, 0.5, grid).to_dense()
    border = J[-1]
    np.testing.assert_array_equal(border[:-1], 0.0)
    assert border[-1] == pytest.approx(dphi(s.eta1, 1.0), rel=1e-14)


def test_flux_block_symmetric_for_constant_state():
    p = ProblemSpec(0.5, 0.0, 1.0, 3.0)
    grid = make_grid(0.5, 12)
    s = StateVector(np.full(11, 2.0), np.full(12, 3.0))
    J = assemble_jacobian(s, p, 0.5, grid).to_dense()
    Jgg = J[:11, :11]
    np.testing.assert_allclose(Jgg, Jgg.T, rtol=1e-14, atol=0)


def test_bordered_solve_matches_dense():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 30)
    s = random_state(p, 30, 0.5, SplitMix64(9))
    J = assemble_jacobian(s, p, 0.5, grid)
    b = np.linspace(-1.0, 1.0, J.shape[0])
    np.testing.assert_allclose(J.solve(b), np.linalg.solve(J.to_dense(), b), rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------- diagnostics


def test_first_integral_is_rescaled_constraint():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 40)
    s = random_state(p, 40, 0.5, SplitMix64(1))
    g, m = s.full_g(), s.full_m(p.eta0)
    assert first_integral_c(s, p, grid) == constraint_value(g, m, p, grid) * 0.5 / 0.5


def test_first_integral_perturbation(baseline_report, baseline_problem):
    grid = make_grid(0.5, 800)
    s = baseline_report.state.copy()
    c0 = first_integral_c(s, baseline_problem, grid)
    assert abs(c0) <= 10 * 1e-10 * max(1.0, abs(s.eta1))
    delta = 1e-3 * s.eta1
    s.m[-1] += delta
    c1 = first_integral_c(s, baseline_problem, grid)
    expected = dphi(s.eta1 - delta, 1.0) * delta * 0.5 / 0.5
    assert c1 - c0 == pytest.approx(expected, rel=2e-3)


def test_pointwise_identity_converges(mild_problem):
    vals = []
    for N in (400, 800):
        grid = make_grid(0.5, N)
        vals.append(pointwise_identity_residual(solve_cold(mild_problem, 0.5, grid).state, mild_problem, grid, 0.5))
    assert 3.0 <= vals[0] / vals[1] <= 4.6


def test_pointwise_identity_negative_control(mild_problem):
    grid = make_grid(0.5, 50)
    s = random_state(mild_problem, 50, 0.5, SplitMix64(4))
    assert pointwise_identity_residual(s, mild_problem, grid, 0.5) > 1.0


def test_weak_form_converged_small(mild_problem):
    res = []
    for N in (200, 400):
        grid = make_grid(0.5, N)
        res.append(max(weak_form_residual(solve_cold(mild_problem, 0.5, grid).state, mild_problem, grid, 0.5)))
    assert res[1] < res[0] / 2.0  # at least first order


def test_weak_form_manufactured():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    case = sine_case(p)
    src = (lambda r: exact_rows(case, p, 0.5, r)[0], lambda r: exact_rows(case, p, 0.5, r)[1])
    res = []
    for N in (100, 200):
        grid = make_grid(0.5, N)
        we, wh = weak_form_residual(interpolant(case, grid), p, grid, 0.5, source=src)
        res.append((we / grid.h, wh / grid.h))  # per unit support
    for a, b in zip(*res):
        assert a / b >= 3.4


def test_weak_form_locality():
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 20)
    s = random_state(p, 20, 0.5, SplitMix64(8))
    we0, wh0 = weak_form_defects(s, p, grid, 0.5)
    t = s.copy()
    t.g[9] *= 1.1  # node 10
    we1, wh1 = weak_form_defects(t, p, grid, 0.5)
    changed = np.flatnonzero(we1 != we0) + 1
    assert set(changed) <= {9, 10, 11}
    assert set(np.flatnonzero(wh1 != wh0) + 1) <= {9, 10, 11}


def test_weak_form_sonic_boundary_form():
    # with k = 1 the boundary cells use the squared form; values stay finite
    p = ProblemSpec(0.5, 1.0, 1.0, 3.0)
    grid = make_grid(0.5, 40)
    rep = solve_cold(p, 0.5, grid)
    we, wh = weak_form_residual(rep.state, p, grid, 1.0)
    assert math.isfinite(we) and math.isfinite(wh)
