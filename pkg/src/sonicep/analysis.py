"""Closed-form thresholds, analytic checks and existence scans.

Every threshold reduces to an inversion of ``Phi(.; a)`` on ``[1, inf)``;
with ``theta = 1/tau`` the relaxation terms read ``theta`` (or ``theta j``).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .discretization import Grid
from .errors import ParameterError
from .model import DopingProfile, ProblemSpec, SolutionFields, eval_phi, invert_phi
from .rng import SplitMix64
from .solver import NewtonOptions, newton_solve, perturbed_init

SCAN_COLUMNS = ("eta0", "bump_level", "status", "residual", "min_g_interior", "min_m", "c_value")


def _check_eps(epsilon0: float) -> None:
    if not 0.0 < epsilon0 < 1.0:
        raise ParameterError(f"epsilon0 must lie in (0, 1), got {epsilon0!r}")


def eta_star(m_lower: float, B_upper: float, theta: float, epsilon0: float, k: float = 1.0) -> float:
    """Hole boundary value above which a subsonic solution is guaranteed."""
    _check_eps(epsilon0)
    if not m_lower > 1.0:
        raise ParameterError("m_lower must exceed 1")
    if B_upper < 0.0:
        raise ParameterError("B_upper must be non-negative")
    if not 0.0 < k <= 1.0:
        raise ParameterError("k must lie in (0, 1]")
    rhs = (
        eval_phi(m_lower + 3.0, 1.0)
        + 4.0 * (1.0 - epsilon0) * theta
        - 8.0 * math.log(epsilon0)
        + eval_phi(m_lower + B_upper + 2.0 * theta + 5.0, k)
        - 0.5 * k
    )
    return invert_phi(rhs, 1.0)


def m_bar(eta0: float, theta: float, epsilon0: float) -> float:
    """Upper bound for the hole density."""
    _check_eps(epsilon0)
    if not eta0 > 1.0:
        raise ParameterError("eta0 must exceed 1")
    return invert_phi(eval_phi(eta0, 1.0) + 4.0 * (1.0 - epsilon0) * theta - 12.0 * math.log(epsilon0), 1.0)


def c_bound(theta: float, epsilon0: float) -> float:
    """Bound on ``|c|`` for the first integral."""
    _check_eps(epsilon0)
    return 2.0 * epsilon0 * theta - 8.0 * epsilon0 * math.log(epsilon0) / (1.0 - epsilon0)


def g_bar(eta_bar: float, theta: float, epsilon0: float, j: float = 1.0) -> float:
    """Electron cap used by the non-existence argument."""
    _check_eps(epsilon0)
    if not eta_bar > 1.0:
        raise ParameterError("eta_bar must exceed 1")
    return invert_phi(eval_phi(eta_bar, 1.0) + 0.5 + theta * j - 4.0 * math.log(epsilon0), 1.0)


def B_star(eta_bar: float, theta: float, epsilon0: float, j: float = 1.0) -> float:
    """Doping level on the middle half of the shell that rules out solutions."""
    gb = g_bar(eta_bar, theta, epsilon0, j)
    e = epsilon0
    return (
        (3.0 * e + 1.0) * 4.0 * e / (1.0 - e) ** 2 * eval_phi(gb, 1.0)
        + (3.0 * e + 1.0) * e * theta / (1.0 - e)
        + 4.0 * (gb + 2.0) / (1.0 - e)
    )


def bump_interval(epsilon0: float) -> tuple[float, float]:
    _check_eps(epsilon0)
    return epsilon0 + (1.0 - epsilon0) / 4.0, epsilon0 + 3.0 * (1.0 - epsilon0) / 4.0


def j_tau_threshold(C1: float, C2: float) -> float:
    if C1 < 1.0 or C2 < 1.0:
        raise ParameterError("C1 and C2 must be >= 1")
    first = (-C2 + math.sqrt(C2 * (C1 + C2))) / (4.0 * C1 * C2)
    return min(first, 1.0 / (8.0 * C1 * C2 * C2))


def estimate_C1_C2(interval: Sequence[float], j: float) -> tuple[float, float]:
    """Mean-value constants for ``F = Phi(.; j^2)`` on ``[a, b]``.

    ``F'(h) = (h^2 - j^2)/h^3`` increases up to ``h = sqrt(3) j`` and
    decreases after, so its minimum on ``[a, b]`` sits at an end.  Both
    constants equal ``max(max 1/F', 1/min F') = 1/min F'``, which exceeds
    ``a > 1``.
    """
    a, b = float(interval[0]), float(interval[1])
    if not (a > max(1.0, j) and b > a):
        raise ParameterError(f"need b > a > max(1, j), got [{a!r}, {b!r}]")
    fp_min = min((a * a - j * j) / a**3, (b * b - j * j) / b**3)
    C = 1.0 / fp_min
    return C, C


@dataclass(frozen=True)
class ThresholdSet:
    eta_star: float
    m_bar: float
    c_bound: float
    g_bar: float
    B_star: float
    alpha: float
    beta: float
    j_tau_threshold: float
    C1: float
    C2: float

    def to_dict(self) -> dict:
        return asdict(self)


def thresholds(
    problem: ProblemSpec,
    eta_bar: float,
    *,
    B_upper: float | None = None,
    k: float = 1.0,
) -> ThresholdSet:
    """All closed-form constants for one parameter set.

    ``B_upper`` defaults to the supremum of the doping.  ``C1, C2`` are taken
    over the hole window ``[m_lower + 3, m_bar(eta0)]``.
    """
    e, th = problem.epsilon0, problem.theta
    B_up = problem.doping.sup if B_upper is None else B_upper
    mb = m_bar(problem.eta0, th, e)
    C1, C2 = estimate_C1_C2((problem.m_lower + 3.0, max(mb, problem.m_lower + 3.0 + 1e-9)), problem.j)
    alpha, beta = bump_interval(e)
    return ThresholdSet(
        eta_star=eta_star(problem.m_lower, B_up, th, e, k),
        m_bar=mb,
        c_bound=c_bound(th, e),
        g_bar=g_bar(eta_bar, th, e, problem.j),
        B_star=B_star(eta_bar, th, e, problem.j),
        alpha=alpha,
        beta=beta,
        j_tau_threshold=j_tau_threshold(C1, C2),
        C1=C1,
        C2=C2,
    )


def necessary_condition(
    solution: SolutionFields, eta_bar: float, theta: float, epsilon0: float, j: float = 1.0
) -> tuple[bool, float]:
    """``max w(g) < w(g_bar)``: returns (holds, margin ``w(g_bar) - max w(g)``)."""
    gb = g_bar(eta_bar, theta, epsilon0, j)
    margin = float(eval_phi(gb, 1.0) - np.max(eval_phi(np.asarray(solution.g, dtype=float), 1.0)))
    return margin > 0.0, margin


def tau_infty_identity_check(sol1: SolutionFields, sol2: SolutionFields) -> float:
    """Max deviation from ``w(g1) - w(g2) = w(m2) - w(m1)``."""
    if sol1.r.shape != sol2.r.shape or not np.array_equal(sol1.r, sol2.r):
        raise ParameterError("solutions live on different grids")
    lhs = eval_phi(sol1.g, 1.0) - eval_phi(sol2.g, 1.0)
    rhs = eval_phi(sol2.m, 1.0) - eval_phi(sol1.m, 1.0)
    return float(np.max(np.abs(lhs - rhs)))


# --------------------------------------------------------------------------
# phase scan
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanCell:
    eta0: float
    bump_level: float
    status: str  # exists | not-found | inconclusive
    residual: float
    min_g_interior: float
    min_m: float
    c_value: float
    seeds_converged: int


def _scan_cell(problem: ProblemSpec, grid: Grid, k: float, opts, seeds: int, cell_seed: int, level: float):
    rng = SplitMix64(cell_seed)
    reports = []
    for _ in range(seeds):
        init = perturbed_init(problem, grid, rng)
        rep = newton_solve(problem, k, grid, init, opts)
        reports.append(rep)
        if rep.converged and rep.diagnostics["min_g_interior"] > 1.0:
            break
    good = [r for r in reports if r.converged and r.diagnostics["min_g_interior"] > 1.0]
    if good:
        best, status = good[0], "exists"
    else:
        best = min(reports, key=lambda r: r.residual)
        status = "inconclusive" if any(r.status == "inconclusive" for r in reports) else "not-found"
    d = best.diagnostics
    return ScanCell(
        eta0=problem.eta0,
        bump_level=level,
        status=status,
        residual=best.residual,
        min_g_interior=d["min_g_interior"],
        min_m=d["min_m"],
        c_value=d["c"],
        seeds_converged=len(good),
    )


def phase_scan(
    template: ProblemSpec,
    eta0_values: Sequence[float],
    bump_levels: Sequence[float],
    grid: Grid,
    k: float,
    opts: NewtonOptions | None = None,
    *,
    seeds: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> list[ScanCell]:
    """Existence map over ``eta0 x bump level``.

    Each cell places a bump of the given level on the middle half of the
    shell over the template's base doping and tries up to ``seeds`` random
    starts, stopping at the first converged one.  Cells are returned in
    row-major order (``eta0`` outer) regardless of ``threads``.
    """
    eta0_values, bump_levels = list(eta0_values), list(bump_levels)
    if not eta0_values or not bump_levels:
        raise ParameterError("eta0 and bump level lists must be non-empty")
    if seeds < 1:
        raise ParameterError("seeds must be >= 1")
    opts = opts or NewtonOptions()
    alpha, beta = bump_interval(template.epsilon0)
    base = template.doping.inf
    root = SplitMix64(seed)
    jobs = []
    for eta0 in eta0_values:
        for level in bump_levels:
            prob = template.replace(eta0=float(eta0), doping=DopingProfile.bump(base, float(level), alpha, beta))
            jobs.append((prob, root.next_u64(), float(level)))

    def run(job):
        prob, cseed, level = job
        return _scan_cell(prob, grid, k, opts, seeds, cseed, level)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]
