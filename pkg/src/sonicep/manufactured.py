"""Manufactured solutions for the discrete operator.

A smooth pair ``(g*, m*)`` with ``g*(eps0) = g*(1) = 1`` and
``m*(eps0) = eta0`` is substituted into the continuous rows; the result is
used as forcing, so the discrete residual at the nodal interpolant is pure
truncation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .discretization import Grid, Source, StateVector, assemble_residual
from .model import ProblemSpec, eval_phi

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Manufactured:
    """Profiles with their first and second derivatives."""

    g: Fn
    g_r: Fn
    g_rr: Fn
    m: Fn
    m_r: Fn
    m_rr: Fn


def sine_case(problem: ProblemSpec, amplitude: float = 1.0) -> Manufactured:
    """``g* = 1 + A sin(pi x)``, ``m* = eta0 (1 + (1 - cos(pi x))/4)``, ``x = (r - eps0)/(1 - eps0)``.

    The hole profile scales with ``eta0`` so its truncation error stays
    well above round-off for large ``eta0``.
    """
    e = problem.epsilon0
    w = math.pi / (1.0 - e)
    eta0 = problem.eta0
    return Manufactured(
        g=lambda r: 1.0 + amplitude * np.sin(w * (r - e)),
        g_r=lambda r: amplitude * w * np.cos(w * (r - e)),
        g_rr=lambda r: -amplitude * w * w * np.sin(w * (r - e)),
        m=lambda r: eta0 * (1.0 + 0.25 * (1.0 - np.cos(w * (r - e)))),
        m_r=lambda r: 0.25 * eta0 * w * np.sin(w * (r - e)),
        m_rr=lambda r: 0.25 * eta0 * w * w * np.cos(w * (r - e)),
    )


def _div_flux(r, u, u_r, u_rr, a):
    """``d/dr [r^2 (1/u - a/u^3) u_r]``."""
    coef = 1.0 / u - a / u**3
    dcoef = -1.0 / u**2 + 3.0 * a / u**4
    return 2.0 * r * coef * u_r + r * r * dcoef * u_r * u_r + r * r * coef * u_rr


def exact_rows(case: Manufactured, problem: ProblemSpec, k: float, r: np.ndarray):
    """Continuous electron and hole rows evaluated at ``r``."""
    j, c = problem.j, problem.theta * problem.j
    g, gr, grr = case.g(r), case.g_r(r), case.g_rr(r)
    m, mr, mrr = case.m(r), case.m_r(r), case.m_rr(r)
    B = problem.doping(r)
    drift_g = c * (2.0 * r / g - r * r * gr / g**2)
    drift_m = c * (2.0 * r / m - r * r * mr / m**2)
    e_row = _div_flux(r, g, gr, grr, k * j * j) + drift_g - (g - m - B + 2.0)
    h_row = _div_flux(r, m, mr, mrr, j * j) - drift_m - (m + B - g + 2.0)
    return e_row, h_row


def exact_constraint(case: Manufactured, problem: ProblemSpec) -> float:
    e, j = problem.epsilon0, problem.j
    integral, _ = quad(lambda s: 1.0 / float(case.g(s)) - 1.0 / float(case.m(s)), e, 1.0,
                       epsabs=1e-14, epsrel=1e-14, limit=200)
    a = j * j
    return (
        eval_phi(float(case.m(1.0)), a)
        - eval_phi(problem.eta0, a)
        + problem.theta * j * integral
        + 4.0 * math.log(e)
    )


def source_for(case: Manufactured, problem: ProblemSpec, k: float, grid: Grid) -> Source:
    ri = grid.r[1:-1]
    e_row, h_row = exact_rows(case, problem, k, ri)
    return Source(e_row, h_row, exact_constraint(case, problem))


def interpolant(case: Manufactured, grid: Grid) -> StateVector:
    r = grid.r
    g = case.g(r)
    g[0] = g[-1] = 1.0
    return StateVector.from_nodal(g, case.m(r))


def truncation_error(case: Manufactured, problem: ProblemSpec, k: float, grid: Grid, *, flux: str = "mean"):
    """Max electron, hole and constraint residuals at the interpolant."""
    R = assemble_residual(interpolant(case, grid), problem, k, grid, source=source_for(case, problem, k, grid), flux=flux)
    return float(np.max(np.abs(R.electron))), float(np.max(np.abs(R.hole))), abs(R.constraint)
