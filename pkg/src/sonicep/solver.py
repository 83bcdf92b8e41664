"""Damped Newton, continuation in the regularisation k, and solution fits."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .discretization import (
    Grid,
    Source,
    StateVector,
    assemble_jacobian,
    assemble_residual,
    check_state,
    first_integral_c,
    g_floor,
    make_grid,
    pointwise_identity_residual,
    weak_form_residual,
)
from .errors import ParameterError
from .model import ProblemSpec, SolutionFields, eval_phi, invert_phi
from .rng import SplitMix64

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonOptions:
    """Newton controls.

    ``tol`` applies to the scaled residual (each row divided by the sum of
    the magnitudes of its terms).  With ``log_step`` the update is computed
    in ``ln`` of the unknowns, i.e. ``x <- x * exp(lambda * dz)``.
    """

    max_iterations: int = 50
    tol: float = 1e-10
    backtrack: float = 0.5
    min_step: float = 2.0**-20
    g_margin: float = 1e-12
    m_margin: float = 1e-12
    log_step: bool = True
    flux: str = "potential"

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError("tolerance must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ParameterError("backtracking factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ContinuationSchedule:
    """Increasing sequence of regularisation values in (0, 1)."""

    ks: tuple[float, ...]

    def __post_init__(self):
        ks = tuple(float(k) for k in self.ks)
        object.__setattr__(self, "ks", ks)
        if not ks:
            raise ParameterError("empty continuation schedule")
        if any(not 0.0 < k < 1.0 for k in ks):
            raise ParameterError("schedule values must lie in (0, 1)")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ParameterError("schedule must be strictly increasing")

    @classmethod
    def default(cls, k0: float = 0.5, k_final: float = 1.0 - 1e-6) -> "ContinuationSchedule":
        """``k_i = 1 - (1 - k0) 2**-i`` until ``k_final`` is reached."""
        ks = []
        for i in itertools.count():
            k = 1.0 - (1.0 - k0) * 2.0**-i
            if k >= k_final:
                break
            ks.append(k)
        ks.append(k_final)
        return cls(tuple(ks))


@dataclass
class SolveReport:
    converged: bool
    status: str  # converged | inconclusive | failed
    iterations: int
    residual: float
    residual_raw: float
    k: float
    state: StateVector
    solution: SolutionFields | None
    diagnostics: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    cause: str | None = None
    stages: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "residual": self.residual,
            "residual_raw": self.residual_raw,
            "k": self.k,
            "cause": self.cause,
            "diagnostics": dict(self.diagnostics),
            "stages": list(self.stages),
        }


@dataclass
class UniquenessReport:
    n_starts: int
    n_converged: int
    max_dist_g: float
    max_dist_m: float
    tol_g: float
    tol_m: float
    verdict: str  # unique-within-tol | multiple-solutions | inconclusive
    reports: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "n_starts": self.n_starts,
            "n_converged": self.n_converged,
            "max_dist_g": self.max_dist_g,
            "max_dist_m": self.max_dist_m,
            "tol_g": self.tol_g,
            "tol_m": self.tol_m,
            "verdict": self.verdict,
        }


# --------------------------------------------------------------------------
# initial guesses
# --------------------------------------------------------------------------

def eta1_guess(problem: ProblemSpec, epsilon0: float | None = None) -> float:
    """Closed-form constraint solution with the friction integral dropped."""
    eps0 = problem.epsilon0 if epsilon0 is None else epsilon0
    a = problem.j * problem.j
    return invert_phi(eval_phi(problem.eta0, a) - 4.0 * math.log(eps0), a)


def default_init(problem: ProblemSpec, grid: Grid, amplitude: float = 0.5) -> StateVector:
    """Sine bump for ``g``; ``m`` affine from ``eta0`` to the eta1 guess."""
    if amplitude < 0:
        raise ParameterError("amplitude must be non-negative")
    r = grid.r
    x = (r - grid.epsilon0) / (1.0 - grid.epsilon0)
    g = 1.0 + amplitude * np.sin(np.pi * x)
    g[0] = g[-1] = 1.0
    eta1 = eta1_guess(problem, grid.epsilon0)
    m = problem.eta0 + (eta1 - problem.eta0) * x
    return StateVector.from_nodal(g, m)


# --------------------------------------------------------------------------
# Newton
# --------------------------------------------------------------------------

def _clip(x: np.ndarray, n_g: int, g_min: float, m_min: float) -> tuple[np.ndarray, bool]:
    lo = np.empty_like(x)
    lo[:n_g] = g_min
    lo[n_g:] = m_min
    clipped = bool(np.any(x < lo))
    return np.maximum(x, lo), clipped


def diagnostics(state: StateVector, problem: ProblemSpec, grid: Grid, k: float) -> dict:
    g, m = state.full_g(), state.full_m(problem.eta0)
    we, wh = weak_form_residual(state, problem, grid, k)
    return {
        "c": first_integral_c(state, problem, grid),
        "pointwise_identity": pointwise_identity_residual(state, problem, grid, k),
        "weak_electron": we,
        "weak_hole": wh,
        "min_g_interior": float(np.min(g[1:-1])),
        "max_g": float(np.max(g)),
        "min_m": float(np.min(m)),
        "max_m": float(np.max(m)),
        "eta1": state.eta1,
    }


def newton_solve(
    problem: ProblemSpec,
    k: float,
    grid: Grid,
    init: StateVector,
    opts: NewtonOptions | None = None,
    *,
    source: Source | None = None,
) -> SolveReport:
    """Damped Newton on the bordered system at fixed ``k``.

    The merit function is the scaled residual max norm; a step is accepted
    only if it strictly decreases it.  An infeasible ``init`` raises
    :class:`AssemblyError`.
    """
    opts = opts or NewtonOptions()
    if not 0.0 < k < 1.0:
        raise ParameterError(f"k must lie in (0, 1), got {k!r}")
    check_state(init, problem, k, grid)
    N = grid.N
    n_g = N - 1
    g_min = g_floor(k, problem.j) + opts.g_margin
    m_min = 1.0 + opts.m_margin

    x = init.to_vector().copy()
    state = StateVector.from_vector(x, N)
    R = assemble_residual(state, problem, k, grid, source=source, flux=opts.flux)
    merit = R.scaled_norm()
    history = [merit]
    clipped_last = False
    cause = None
    it = 0
    while merit > opts.tol:
        if it >= opts.max_iterations:
            cause = "iteration cap reached"
            break
        it += 1
        J = assemble_jacobian(state, problem, k, grid, flux=opts.flux)
        try:
            if opts.log_step:
                dz = J.scale_columns(x).solve(-R.vector)
            else:
                dz = J.solve(-R.vector)
        except (np.linalg.LinAlgError, ValueError) as exc:
            cause = f"singular bordered factorisation: {exc}"
            break
        if not np.all(np.isfinite(dz)):
            cause = "non-finite Newton direction"
            break
        lam = 1.0
        accepted = False
        while lam >= opts.min_step:
            with np.errstate(over="ignore", invalid="ignore"):
                cand = x * np.exp(lam * dz) if opts.log_step else x + lam * dz
            if np.all(np.isfinite(cand)):
                cand, clipped = _clip(cand, n_g, g_min, m_min)
                cstate = StateVector.from_vector(cand, N)
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    Rc = assemble_residual(cstate, problem, k, grid, source=source, flux=opts.flux)
                    mc = Rc.scaled_norm()
                if math.isfinite(mc) and mc < merit:
                    accepted = True
                    break
            lam *= opts.backtrack
        if not accepted:
            cause = "line search stalled"
            break
        x, state, R, merit, clipped_last = cand, cstate, Rc, mc, clipped
        history.append(merit)
        log.debug("newton it=%d lambda=%g merit=%.3e", it, lam, merit)

    converged = merit <= opts.tol
    status = "converged" if converged else "failed"
    if converged and clipped_last:
        status, converged = "inconclusive", False
        cause = "positivity clipping active at final iterate"
    diag = diagnostics(state, problem, grid, k)
    solution = SolutionFields.from_arrays(grid.r, state.full_g(), state.full_m(problem.eta0), problem, k)
    return SolveReport(
        converged=converged,
        status=status,
        iterations=it,
        residual=merit,
        residual_raw=R.max_norm(),
        k=k,
        state=state,
        solution=solution,
        diagnostics=diag,
        history=history,
        cause=cause,
    )


def prolong(state: StateVector, coarse: Grid, fine: Grid, eta0: float) -> StateVector:
    """Interpolate a coarse state to a finer grid (linear in ``ln``)."""
    g = np.exp(np.interp(fine.r, coarse.r, np.log(state.full_g())))
    m = np.exp(np.interp(fine.r, coarse.r, np.log(state.full_m(eta0))))
    g[0] = g[-1] = 1.0
    return StateVector.from_nodal(g, m)


def solve_cold(
    problem: ProblemSpec,
    k: float,
    grid: Grid,
    opts: NewtonOptions | None = None,
    *,
    amplitude: float = 0.5,
    base_N: int = 400,
) -> SolveReport:
    """Newton from :func:`default_init`, bootstrapped through coarser grids.

    Grids finer than ``base_N`` cells are reached by repeated halving down
    to ``base_N``, solving there from the default guess, and prolonging.
    """
    if grid.N <= base_N:
        return newton_solve(problem, k, grid, default_init(problem, grid, amplitude), opts)
    coarse = make_grid(grid.epsilon0, max(base_N, grid.N // 2))
    rep = solve_cold(problem, k, coarse, opts, amplitude=amplitude, base_N=base_N)
    if not rep.converged:
        return rep
    return newton_solve(problem, k, grid, prolong(rep.state, coarse, grid, problem.eta0), opts)


def continuation_solve(
    problem: ProblemSpec,
    grid: Grid,
    schedule: ContinuationSchedule | None = None,
    opts: NewtonOptions | None = None,
    *,
    init: StateVector | None = None,
) -> SolveReport:
    """Walk ``k`` along the schedule, warm-starting each stage.

    The first stage starts from ``init`` if given, else from
    :func:`solve_cold`.  On failure the last successful report is returned
    with ``cause`` describing the failed stage.
    """
    schedule = schedule or ContinuationSchedule.default()
    opts = opts or NewtonOptions()
    last: SolveReport | None = None
    stages = []
    state = init
    for k in schedule.ks:
        if state is None:
            rep = solve_cold(problem, k, grid, opts)
        else:
            rep = newton_solve(problem, k, grid, state, opts)
        stages.append({
            "k": k,
            "converged": rep.converged,
            "iterations": rep.iterations,
            "residual": rep.residual,
            "min_g_interior": rep.diagnostics["min_g_interior"],
        })
        if not rep.converged:
            failed = f"continuation failed at k={k!r}: {rep.cause}"
            if last is None:
                rep.cause = failed
                rep.stages = stages
                return rep
            last.cause = failed
            last.stages = stages
            return last
        last, state = rep, rep.state
    last.stages = stages
    return last


# --------------------------------------------------------------------------
# fits
# --------------------------------------------------------------------------

def holder_exponent_fit(solution: SolutionFields, epsilon0: float, end: str = "left") -> tuple[float, float]:
    """Slope of ``ln(g - 1)`` against ``ln(distance to the sonic end)``.

    Uses nodes whose distance lies in ``[2h, (1 - eps0)/8]``.  Returns the
    slope and the RMS fit residual.
    """
    r, g = solution.r, solution.g
    h = r[1] - r[0]
    dist = r - epsilon0 if end == "left" else 1.0 - r
    if end not in ("left", "right"):
        raise ParameterError("end must be 'left' or 'right'")
    sel = (dist >= 2 * h * (1 - 1e-9)) & (dist <= (1.0 - epsilon0) / 8.0 * (1 + 1e-9)) & (g > 1.0)
    if np.count_nonzero(sel) < 3:
        raise ParameterError("too few nodes in the fitting window")
    X, Y = np.log(dist[sel]), np.log(g[sel] - 1.0)
    A = np.column_stack((X, np.ones_like(X)))
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    fit_res = float(np.sqrt(np.mean((A @ coef - Y) ** 2)))
    return float(coef[0]), fit_res


def nu_bar_fit(solution: SolutionFields) -> float:
    """Largest ``nu >= 0`` with ``g >= 1 + nu sin(pi (r - eps0)/(1 - eps0))``."""
    r, g = solution.r, solution.g
    eps0 = r[0]
    s = np.sin(np.pi * (r[1:-1] - eps0) / (1.0 - eps0))
    return max(0.0, float(np.min((g[1:-1] - 1.0) / s)))


# --------------------------------------------------------------------------
# multi-start
# --------------------------------------------------------------------------

def perturbed_init(problem: ProblemSpec, grid: Grid, rng: SplitMix64) -> StateVector:
    """Random feasible start: sine bump plus modes 2-3 for ``g``, bent ``m``.

    ``|sin(q x)| <= q sin(x)`` keeps ``g - 1 >= amp sin(pi x) / 2`` because the
    mode-q coefficient is bounded by ``amp / (4 q)``.
    """
    amp = rng.uniform(0.1, 1.5)
    c2 = rng.uniform(-amp / 8.0, amp / 8.0)
    c3 = rng.uniform(-amp / 12.0, amp / 12.0)
    bend = rng.uniform(-0.5, 0.5)
    r = grid.r
    x = (r - grid.epsilon0) / (1.0 - grid.epsilon0)
    g = 1.0 + amp * np.sin(np.pi * x) + c2 * np.sin(2 * np.pi * x) + c3 * np.sin(3 * np.pi * x)
    g[0] = g[-1] = 1.0
    eta1 = eta1_guess(problem, grid.epsilon0)
    m_aff = problem.eta0 + (eta1 - problem.eta0) * x
    m = 1.0 + (m_aff - 1.0) * np.exp(bend * np.sin(np.pi * x))
    return StateVector.from_nodal(g, m)


def multi_start_uniqueness(
    problem: ProblemSpec,
    grid: Grid,
    k: float,
    n_seeds: int,
    seed: int,
    opts: NewtonOptions | None = None,
    *,
    rel_tol: float = 1e-8,
    threads: int = 1,
) -> UniquenessReport:
    """Solve from ``n_seeds`` random starts and compare converged fields.

    Agreement is judged per field: ``g`` within ``rel_tol (1 + max|g|)`` and
    ``m`` within ``rel_tol (1 + max|m|)``.
    """
    opts = opts or NewtonOptions()
    rng = SplitMix64(seed)
    inits = [perturbed_init(problem, grid, rng) for _ in range(max(n_seeds, 0))]

    def run(init):
        return newton_solve(problem, k, grid, init, opts)

    if threads > 1 and len(inits) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, inits))
    else:
        reports = [run(s) for s in inits]

    good = [r for r in reports if r.converged]
    dg = dm = 0.0
    tg = tm = float("nan")
    if good:
        gmax = max(float(np.max(np.abs(r.solution.g))) for r in good)
        mmax = max(float(np.max(np.abs(r.solution.m))) for r in good)
        tg, tm = rel_tol * (1.0 + gmax), rel_tol * (1.0 + mmax)
        for a, b in itertools.combinations(good, 2):
            dg = max(dg, float(np.max(np.abs(a.solution.g - b.solution.g))))
            dm = max(dm, float(np.max(np.abs(a.solution.m - b.solution.m))))
    if len(good) < 2:
        verdict = "inconclusive"
    elif dg <= tg and dm <= tm:
        verdict = "unique-within-tol"
    else:
        verdict = "multiple-solutions"
    return UniquenessReport(len(inits), len(good), dg, dm, tg, tm, verdict, reports)
