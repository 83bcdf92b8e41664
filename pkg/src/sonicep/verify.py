"""Invariant suite behind ``sonicep verify``.

Each check returns ``{"name", "passed", "value", "bound"}``; the suite is
deterministic for a fixed seed.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from . import analysis
from .discretization import (
    StateVector,
    assemble_jacobian,
    assemble_residual,
    constraint_value,
    first_integral_c,
    make_grid,
)
from .manufactured import sine_case, truncation_error
from .model import ProblemSpec, eval_phi, invert_phi
from .rng import SplitMix64
from .solver import NewtonOptions, solve_cold


def _check(name: str, passed: bool, value, bound) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "bound": bound}


def phi_round_trip_error(n: int = 100, seed: int = 0) -> float:
    rng = SplitMix64(seed)
    worst = 0.0
    for _ in range(n):
        h = rng.uniform(1.0, 1e3)
        for a in (0.0, 0.25, 1.0):
            worst = max(worst, abs(invert_phi(float(eval_phi(h, a)), a) - h))
    return worst


def manufactured_ratios(problem: ProblemSpec, k: float, Ns=(100, 200, 400), flux: str = "mean") -> list[list[float]]:
    """Grid-doubling ratios ``err(N)/err(2N)`` per species for each ``N``."""
    case = sine_case(problem)
    out = []
    for N in Ns:
        e1 = truncation_error(case, problem, k, make_grid(problem.epsilon0, N), flux=flux)
        e2 = truncation_error(case, problem, k, make_grid(problem.epsilon0, 2 * N), flux=flux)
        out.append([e1[0] / e2[0], e1[1] / e2[1]])
    return out


def random_state(problem: ProblemSpec, N: int, k: float, rng: SplitMix64) -> StateVector:
    """Feasible state with ``g`` in ``[floor + 0.2, floor + 1.2]`` and ``m`` in ``[1.5, 2.5] eta0``."""
    floor = problem.j * math.sqrt(k)
    g = np.array([floor + 0.2 + rng.uniform() for _ in range(N - 1)])
    m = np.array([problem.eta0 * (1.5 + rng.uniform()) for _ in range(N)])
    return StateVector(g, m)


def jacobian_fd_error(state: StateVector, problem: ProblemSpec, k: float, grid, *, flux: str = "mean",
                      step: float = 1e-6) -> float:
    """``max |J - J_fd| / max |J|`` with central differences of relative size ``step``."""
    J = assemble_jacobian(state, problem, k, grid, flux=flux).to_dense()
    x = state.to_vector()
    J_fd = np.empty_like(J)
    for i in range(x.size):
        d = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += d
        xm[i] -= d
        rp = assemble_residual(StateVector.from_vector(xp, grid.N), problem, k, grid, flux=flux).vector
        rm = assemble_residual(StateVector.from_vector(xm, grid.N), problem, k, grid, flux=flux).vector
        J_fd[:, i] = (rp - rm) / (2.0 * d)
    return float(np.max(np.abs(J - J_fd)) / np.max(np.abs(J)))


def monotonicity_violations(epsilon0: float = 0.5, m_lower: float = 2.0) -> int:
    """Count lattice violations of the threshold monotonicity properties."""
    lattice = [0.0, 0.5, 1.0, 2.0, 4.0]
    bad = 0
    for th in lattice:  # eta* in B_upper
        vals = [analysis.eta_star(m_lower, B, th, epsilon0) for B in lattice]
        bad += sum(b < a for a, b in zip(vals, vals[1:]))
    for B in lattice:  # eta* in theta
        vals = [analysis.eta_star(m_lower, B, th, epsilon0) for th in lattice]
        bad += sum(b < a for a, b in zip(vals, vals[1:]))
    eta_bars = [1.5, 2.0, 3.0, 5.0, 10.0]
    for th in lattice:  # B* in eta_bar
        vals = [analysis.B_star(eb, th, epsilon0) for eb in eta_bars]
        bad += sum(b < a for a, b in zip(vals, vals[1:]))
    for e in (0.1, 0.3, 0.5, 0.7, 0.9):  # c_bound in theta
        vals = [analysis.c_bound(th, e) for th in lattice]
        bad += sum(b < a for a, b in zip(vals, vals[1:]))
    return bad


def run_checks(problem: ProblemSpec, N: int, k: float, opts: NewtonOptions | None = None, *, seed: int = 0) -> list[dict]:
    opts = opts or NewtonOptions()
    checks = []
    err = phi_round_trip_error(seed=seed)
    checks.append(_check("phi_round_trip", err <= 1e-10, err, 1e-10))

    ratios = manufactured_ratios(problem, k)
    flat = list(itertools.chain.from_iterable(ratios))
    checks.append(_check("manufactured_order", all(3.4 <= r <= 4.6 for r in flat), ratios, [3.4, 4.6]))

    rng = SplitMix64(seed)
    small = make_grid(problem.epsilon0, 12)
    fd = max(jacobian_fd_error(random_state(problem, 12, k, rng), problem, k, small, flux=opts.flux)
             for _ in range(5))
    checks.append(_check("jacobian_fd", fd <= 1e-6, fd, 1e-6))

    viol = monotonicity_violations(problem.epsilon0, problem.m_lower)
    checks.append(_check("threshold_monotonicity", viol == 0, viol, 0))

    grid = make_grid(problem.epsilon0, N)
    rep = solve_cold(problem, k, grid, opts)
    checks.append(_check("solve_converged", rep.converged, rep.residual, opts.tol))
    if rep.converged:
        d = rep.diagnostics
        checks.append(_check("subsonic_interior", d["min_g_interior"] > 1.0, d["min_g_interior"], 1.0))
        checks.append(_check("holes_above_one", d["min_m"] > 1.0, d["min_m"], 1.0))
        cb = analysis.c_bound(problem.theta, problem.epsilon0)
        checks.append(_check("c_within_bound", abs(d["c"]) <= cb, d["c"], cb))
        g, m = rep.state.full_g(), rep.state.full_m(problem.eta0)
        e0 = problem.epsilon0
        same = first_integral_c(rep.state, problem, grid) == constraint_value(g, m, problem, grid) * e0 / (1 - e0)
        checks.append(_check("first_integral_consistency", same, d["c"], None))
        es = analysis.eta_star(problem.m_lower, problem.doping.sup, problem.theta, e0)
        if problem.eta0 >= es:
            mb = analysis.m_bar(problem.eta0, problem.theta, e0)
            lo = problem.m_lower + 3.0
            ok = d["min_m"] >= lo and d["max_m"] <= mb + 1e-3
            checks.append(_check("hole_window", ok, [d["min_m"], d["max_m"]], [lo, mb + 1e-3]))
    return checks
