"""Single-shooting oracle for the regularised first-order system.

From ``r = eps0`` with ``g = 1``, ``m = eta0`` and a trial field ``E0`` the
system

    (1/g - k j^2/g^3) g_r =  E - theta j / g + 2 / r
    (1/m -   j^2/m^3) m_r = -E + theta j / m + 2 / r
    (r^2 E)_r = g - m - B

is integrated with classical fixed-step RK4.  ``E0`` is adjusted until
``g(1) = 1``.  The integral constraint for ``m(1)`` then holds automatically,
so the oracle shares no discrete machinery with the collocation solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, DomainError, ParameterError
from .model import ProblemSpec, eval_phi

COEF_FLOOR = 1e-12


@dataclass
class Trajectory:
    r: np.ndarray
    g: np.ndarray
    m: np.ndarray
    E: np.ndarray
    integral: np.ndarray  # running int_{eps0}^{r} (1/g - 1/m) dr
    step: float
    status: str  # completed | blow-up | coefficient-degeneracy
    E0: float
    k: float
    info: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def mismatch(self) -> float:
        return float(self.g[-1] - 1.0)

    def constraint_residual(self, problem: ProblemSpec) -> float:
        """Integral constraint evaluated with the end value ``m(1)``."""
        a = problem.j * problem.j
        return (
            eval_phi(self.m[-1], a)
            - eval_phi(problem.eta0, a)
            + problem.theta * problem.j * self.integral[-1]
            + 4.0 * math.log(problem.epsilon0)
        )


def rhs_first_order(r: float, g: float, m: float, E: float, problem: ProblemSpec, k: float):
    """Right-hand side ``(g_r, m_r, E_r)``; raises on a vanishing coefficient."""
    j = problem.j
    c = problem.theta * j
    ce = 1.0 / g - k * j * j / (g * g * g)
    ch = 1.0 / m - j * j / (m * m * m)
    if abs(ce) < COEF_FLOOR or abs(ch) < COEF_FLOOR or r <= 0:
        raise DomainError(f"degenerate coefficient at r={r!r} (g={g!r}, m={m!r})")
    g_r = (E - c / g + 2.0 / r) / ce
    m_r = (-E + c / m + 2.0 / r) / ch
    E_r = (g - m - float(problem.doping(r))) / (r * r) - 2.0 * E / r
    return g_r, m_r, E_r


def default_blowup(problem: ProblemSpec) -> float:
    return max(1e6, 1e3 * problem.eta0)


def integrate(
    E0: float,
    problem: ProblemSpec,
    k: float,
    steps: int,
    *,
    blowup: float | None = None,
) -> Trajectory:
    """Fixed-step RK4 from ``eps0`` to 1.

    Stops early with ``blow-up`` when ``|g| + |m| + |E|`` exceeds ``blowup``,
    or with ``coefficient-degeneracy`` when ``g`` drops to ``j sqrt(k)`` or
    ``m`` to ``j``.  ``info['direction']`` records whether ``g`` was heading
    up (+1) or down (-1) when the run stopped.
    """
    if steps < 100:
        raise ParameterError("RK4 needs at least 100 steps")
    blowup = default_blowup(problem) if blowup is None else blowup
    eps0, j = problem.epsilon0, problem.j
    h = (1.0 - eps0) / steps
    g_lo = j * math.sqrt(k)
    dop = problem.doping
    c = problem.theta * j
    jj, kjj = j * j, k * j * j

    def f(r, g, m, E):
        ce = 1.0 / g - kjj / (g * g * g)
        ch = 1.0 / m - jj / (m * m * m)
        if abs(ce) < COEF_FLOOR or abs(ch) < COEF_FLOOR:
            raise DomainError("degenerate")
        return (
            (E - c / g + 2.0 / r) / ce,
            (-E + c / m + 2.0 / r) / ch,
            (g - m - float(dop(r))) / (r * r) - 2.0 * E / r,
            1.0 / g - 1.0 / m,
        )

    rs = np.empty(steps + 1)
    out = np.empty((steps + 1, 4))
    y = (1.0, problem.eta0, float(E0), 0.0)
    rs[0] = eps0
    out[0] = y
    status = "completed"
    direction = 0
    n = 0
    with np.errstate(all="ignore"):
        for n in range(steps):
            r = eps0 + n * h
            try:
                k1 = f(r, *y[:3])
                y2 = tuple(y[i] + 0.5 * h * k1[i] for i in range(4))
                if y2[0] <= g_lo or y2[1] <= j:
                    raise DomainError("degenerate")
                k2 = f(r + 0.5 * h, *y2[:3])
                y3 = tuple(y[i] + 0.5 * h * k2[i] for i in range(4))
                if y3[0] <= g_lo or y3[1] <= j:
                    raise DomainError("degenerate")
                k3 = f(r + 0.5 * h, *y3[:3])
                y4 = tuple(y[i] + h * k3[i] for i in range(4))
                if y4[0] <= g_lo or y4[1] <= j:
                    raise DomainError("degenerate")
                k4 = f(r + h, *y4[:3])
            except (DomainError, ZeroDivisionError, OverflowError):
                status = "coefficient-degeneracy"
                direction = -1 if out[n, 0] < 1.0 or k1[0] < 0 else 1
                break
            y = tuple(y[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(4))
            bad = not all(math.isfinite(v) for v in y)
            if not bad and (y[0] <= g_lo or y[1] <= j):
                status = "coefficient-degeneracy"
                direction = -1 if y[0] <= g_lo or y[0] < out[n, 0] else 1
                break
            if bad or abs(y[0]) + abs(y[1]) + abs(y[2]) > blowup:
                status = "blow-up"
                direction = 1 if (math.isfinite(y[0]) and y[0] > out[n, 0]) else -1
                break
            rs[n + 1] = eps0 + (n + 1) * h if n + 1 < steps else 1.0
            out[n + 1] = y
        else:
            n = steps
    last = n + 1 if status == "completed" else n + 1
    if status == "completed":
        last = steps + 1
    return Trajectory(
        r=rs[:last].copy(), g=out[:last, 0].copy(), m=out[:last, 1].copy(), E=out[:last, 2].copy(),
        integral=out[:last, 3].copy(), step=h, status=status, E0=float(E0), k=k,
        info={"direction": direction, "stopped_at": float(rs[last - 1])},
    )


def shot_sign(traj: Trajectory) -> int:
    """Sign of the mismatch ``g(1) - 1``, extended to aborted runs."""
    if traj.completed:
        return 1 if traj.mismatch > 0 else (-1 if traj.mismatch < 0 else 0)
    return traj.info["direction"] or (1 if traj.g[-1] > 1.0 else -1)


def find_bracket(
    problem: ProblemSpec,
    k: float,
    steps: int,
    E_guess: float,
    *,
    rel: float = 1e-3,
    grow: float = 2.0,
    max_tries: int = 40,
) -> tuple[float, float]:
    """Expand symmetrically around ``E_guess`` until the mismatch changes sign."""
    width = rel * max(1.0, abs(E_guess))
    s0 = shot_sign(integrate(E_guess, problem, k, steps))
    for _ in range(max_tries):
        lo, hi = E_guess - width, E_guess + width
        s_lo = shot_sign(integrate(lo, problem, k, steps))
        s_hi = shot_sign(integrate(hi, problem, k, steps))
        if s_lo != s0:
            return lo, E_guess
        if s_hi != s0:
            return E_guess, hi
        if s_lo != s_hi:
            return lo, hi
        width *= grow
    raise BracketError(f"no sign change found around E0={E_guess!r}")


def shoot_match(
    problem: ProblemSpec,
    k: float,
    steps: int,
    bracket: tuple[float, float],
    *,
    tol: float = 1e-10,
    max_iterations: int = 200,
) -> Trajectory:
    """Drive ``g(1) -> 1`` by a regula-falsi / bisection hybrid on ``E0``.

    Aborted trajectories count by the direction of their divergence.  The
    iteration stops when ``|g(1) - 1| <= tol`` or when the bracket can no
    longer be split in floating point; ``info['mismatch']`` reports what was
    reached.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if not a < b:
        raise BracketError("bracket must satisfy E_low < E_high")
    ta, tb = integrate(a, problem, k, steps), integrate(b, problem, k, steps)
    sa, sb = shot_sign(ta), shot_sign(tb)
    if sa == 0 and ta.completed:
        return ta
    if sb == 0 and tb.completed:
        return tb
    if sa == sb:
        raise BracketError(f"mismatch has the same sign ({sa:+d}) at both bracket ends")
    fa = ta.mismatch if ta.completed else None
    fb = tb.mismatch if tb.completed else None
    best = None
    side = 0
    for it in range(max_iterations):
        mid = 0.5 * (a + b)
        if fa is not None and fb is not None and fa != fb:
            cand = b - fb * (b - a) / (fb - fa)
            if a < cand < b and abs(cand - mid) < 0.45 * (b - a):
                mid = cand
        if not a < mid < b:
            break
        tm = integrate(mid, problem, k, steps)
        sm = shot_sign(tm)
        if tm.completed and (best is None or abs(tm.mismatch) < abs(best.mismatch)):
            best = tm
        if tm.completed and abs(tm.mismatch) <= tol:
            best = tm
            break
        if sm == sa:
            a, ta, fa = mid, tm, (tm.mismatch if tm.completed else None)
            if side == -1 and fb is not None:
                fb *= 0.5  # Illinois modification
            side = -1
        else:
            b, tb, fb = mid, tm, (tm.mismatch if tm.completed else None)
            if side == 1 and fa is not None:
                fa *= 0.5
            side = 1
    if best is None:
        raise BracketError("no completed trajectory inside the bracket")
    best.info.update({"mismatch": best.mismatch, "iterations": it + 1, "bracket": (a, b)})
    return best


def compare_with_collocation(traj: Trajectory, solution, problem: ProblemSpec) -> dict:
    """Max-norm differences against a collocation solution.

    When the RK4 step count is a multiple of the grid cell count the
    comparison uses coinciding nodes; otherwise the trajectory is linearly
    interpolated onto the grid.
    """
    if not traj.completed:
        raise BracketError(f"trajectory did not complete ({traj.status})")
    r = np.asarray(solution.r)
    n_cells, steps = len(r) - 1, len(traj.r) - 1
    if steps % n_cells == 0:
        stride = steps // n_cells
        g, m = traj.g[::stride], traj.m[::stride]
    else:
        g, m = np.interp(r, traj.r, traj.g), np.interp(r, traj.r, traj.m)
    dg = np.abs(np.asarray(solution.g) - g)
    dm = np.abs(np.asarray(solution.m) - m)
    return {
        "max_abs_dg": float(dg.max()),
        "max_abs_dm": float(dm.max()),
        "max_rel_dm": float(np.max(dm / np.abs(m))),
        "shot_mismatch": traj.mismatch,
        "shot_constraint_residual": float(traj.constraint_residual(problem)),
        "E0": traj.E0,
    }
