"""Finite-volume discretisation of the regularised divergence-form system.

Unknowns are the electron density ``g`` at interior nodes ``1..N-1`` (both
ends pinned to the sonic value 1), the hole density ``m`` at nodes ``1..N``
(``m_0 = eta0`` pinned) and, implicitly, ``eta1 = m_N``.  The last unknown is
tied to the integral constraint

    Phi(eta1; j^2) - Phi(eta0; j^2) + theta j int(1/g - 1/m) + 4 ln eps0 = 0

so the linear systems are banded with a single dense border row/column.

Rows are, per interior node ``i``,

    electron:  [F_e]_{i-1/2}^{i+1/2} / h + [P_e] / h - (g_i - m_i - B_i + 2)
    hole:      [F_h]_{i-1/2}^{i+1/2} / h - [P_h] / h - (m_i + B_i - g_i + 2)

with fluxes ``F = r^2 a(u) u_r`` at half nodes and drifts
``P = theta j r^2 / u``.  The regularised electron coefficient is
``1/g - k j^2/g^3``; the hole coefficient is ``1/m - j^2/m^3``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import AssemblyError, ParameterError
from .model import ProblemSpec, dphi, eval_phi

FLUX_FORMS = ("mean", "potential")


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[epsilon0, 1]`` with ``N`` cells."""

    epsilon0: float
    N: int

    @property
    def h(self) -> float:
        return (1.0 - self.epsilon0) / self.N

    @property
    def r(self) -> np.ndarray:
        r = self.epsilon0 + self.h * np.arange(self.N + 1)
        r[0], r[-1] = self.epsilon0, 1.0
        return r

    @property
    def r_half(self) -> np.ndarray:
        r = self.r
        return 0.5 * (r[1:] + r[:-1])

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.N + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


def make_grid(epsilon0: float, N: int, *, min_cells: int = 8) -> Grid:
    """Uniform grid; ``N >= 8`` unless the caller lowers ``min_cells``."""
    if not 0.0 < epsilon0 < 1.0:
        raise ParameterError("epsilon0 must lie in (0, 1)")
    if int(N) != N or N < min_cells:
        raise ParameterError(f"N must be an integer >= {min_cells}")
    return Grid(float(epsilon0), int(N))


def quadrature(values, grid: Grid) -> float:
    """Composite trapezoid rule over the grid nodes."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N + 1,):
        raise ParameterError(f"expected {grid.N + 1} nodal values, got {values.shape}")
    return float(np.dot(grid.trapezoid_weights, values))


@dataclass
class StateVector:
    """Discrete unknowns: interior ``g`` (N-1 values) and ``m`` at nodes 1..N."""

    g: np.ndarray
    m: np.ndarray

    @property
    def eta1(self) -> float:
        return float(self.m[-1])

    @property
    def N(self) -> int:
        return len(self.m)

    def full_g(self) -> np.ndarray:
        return np.concatenate(([1.0], self.g, [1.0]))

    def full_m(self, eta0: float) -> np.ndarray:
        return np.concatenate(([eta0], self.m))

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.g, self.m))

    @classmethod
    def from_vector(cls, x: np.ndarray, N: int) -> "StateVector":
        return cls(np.array(x[: N - 1], dtype=float), np.array(x[N - 1 :], dtype=float))

    @classmethod
    def from_nodal(cls, g_full, m_full) -> "StateVector":
        g_full = np.asarray(g_full, dtype=float)
        m_full = np.asarray(m_full, dtype=float)
        return cls(g_full[1:-1].copy(), m_full[1:].copy())

    def copy(self) -> "StateVector":
        return StateVector(self.g.copy(), self.m.copy())


@dataclass(frozen=True)
class Source:
    """Additive forcing used by manufactured-solution runs.

    The residual rows become ``row - electron``, ``row - hole`` and
    ``constraint - constraint_shift``.
    """

    electron: np.ndarray
    hole: np.ndarray
    constraint: float = 0.0


@dataclass
class ResidualVector:
    electron: np.ndarray
    hole: np.ndarray
    constraint: float
    scale: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.electron, self.hole, [self.constraint]))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.vector)))

    def scaled_norm(self) -> float:
        """Max norm with every row divided by the magnitude of its terms."""
        return float(np.max(np.abs(self.vector) / self.scale))


# --------------------------------------------------------------------------
# validation and half-node fluxes
# --------------------------------------------------------------------------

def g_floor(k: float, j: float) -> float:
    """Electron density below which the regularised coefficient changes sign."""
    return j * math.sqrt(k)


def check_state(state: StateVector, problem: ProblemSpec, k: float, grid: Grid) -> None:
    if len(state.m) != grid.N or len(state.g) != grid.N - 1:
        raise ParameterError(f"state length does not match grid with N={grid.N}")
    if not 0.0 < k <= 1.0:
        raise ParameterError(f"regularisation k must lie in (0, 1], got {k!r}")
    floor = g_floor(k, problem.j)
    bad = np.flatnonzero(~(state.g > floor))
    if bad.size:
        i = int(bad[0]) + 1
        raise AssemblyError(f"g at node {i} is {state.g[bad[0]]!r}, not above {floor!r}", node=i, field="g")
    bad = np.flatnonzero(~(state.m > 1.0))
    if bad.size:
        i = int(bad[0]) + 1
        raise AssemblyError(f"m at node {i} is {state.m[bad[0]]!r}, not above 1", node=i, field="m")


def _flux(u: np.ndarray, a: float, r_half: np.ndarray, h: float, form: str):
    """Half-node flux ``r^2 a(u) u_r`` and its partials w.r.t. left/right node."""
    if form == "mean":
        ub = 0.5 * (u[1:] + u[:-1])
        du = (u[1:] - u[:-1]) / h
        coef = dphi(ub, a)
        dcoef = -1.0 / ub**2 + 3.0 * a / ub**4
        r2 = r_half * r_half
        F = r2 * coef * du
        d_left = r2 * (0.5 * dcoef * du - coef / h)
        d_right = r2 * (0.5 * dcoef * du + coef / h)
    elif form == "potential":
        r2 = r_half * r_half
        F = r2 * (eval_phi(u[1:], a) - eval_phi(u[:-1], a)) / h
        d_left = -r2 * dphi(u[:-1], a) / h
        d_right = r2 * dphi(u[1:], a) / h
    else:
        raise ParameterError(f"unknown flux form {form!r}")
    return F, d_left, d_right


def _drift(u: np.ndarray, c: float, r_half: np.ndarray):
    """Half-node drift ``c r^2 / u_mean`` and its (equal) partials."""
    ub = 0.5 * (u[1:] + u[:-1])
    P = c * r_half * r_half / ub
    d = -0.5 * c * r_half * r_half / (ub * ub)
    return P, d


def constraint_value(g_full, m_full, problem: ProblemSpec, grid: Grid) -> float:
    """Left side of the nonlocal constraint; zero for a consistent solution."""
    a = problem.j * problem.j
    integral = quadrature(1.0 / g_full - 1.0 / m_full, grid)
    return (
        eval_phi(m_full[-1], a)
        - eval_phi(problem.eta0, a)
        + problem.theta * problem.j * integral
        + 4.0 * math.log(grid.epsilon0)
    )


def assemble_residual(
    state: StateVector,
    problem: ProblemSpec,
    k: float,
    grid: Grid,
    *,
    source: Source | None = None,
    flux: str = "mean",
) -> ResidualVector:
    check_state(state, problem, k, grid)
    r, rh, h = grid.r, grid.r_half, grid.h
    j, c = problem.j, problem.theta * problem.j
    g, m = state.full_g(), state.full_m(problem.eta0)
    B = problem.B(r[1:-1])

    Fg, _, _ = _flux(g, k * j * j, rh, h, flux)
    Pg, _ = _drift(g, c, rh)
    Fm, _, _ = _flux(m, j * j, rh, h, flux)
    Pm, _ = _drift(m, c, rh)
    gi, mi = g[1:-1], m[1:-1]

    react_e = gi - mi - B + 2.0
    react_h = mi + B - gi + 2.0
    res_e = (Fg[1:] - Fg[:-1]) / h + (Pg[1:] - Pg[:-1]) / h - react_e
    res_h = (Fm[1:] - Fm[:-1]) / h - (Pm[1:] - Pm[:-1]) / h - react_h
    res_c = constraint_value(g, m, problem, grid)

    absreact = np.abs(gi) + np.abs(mi) + np.abs(B) + 2.0
    scale_e = (np.abs(Fg[1:]) + np.abs(Fg[:-1]) + np.abs(Pg[1:]) + np.abs(Pg[:-1])) / h + absreact
    scale_h = (np.abs(Fm[1:]) + np.abs(Fm[:-1]) + np.abs(Pm[1:]) + np.abs(Pm[:-1])) / h + absreact
    a = j * j
    scale_c = abs(eval_phi(m[-1], a)) + abs(eval_phi(problem.eta0, a)) + 4.0 * abs(math.log(grid.epsilon0)) + 1.0

    if source is not None:
        res_e = res_e - source.electron
        res_h = res_h - source.hole
        res_c = res_c - source.constraint
        scale_e = scale_e + np.abs(source.electron)
        scale_h = scale_h + np.abs(source.hole)
        scale_c = scale_c + abs(source.constraint)

    return ResidualVector(res_e, res_h, float(res_c), np.concatenate((scale_e, scale_h, [scale_c])))


# --------------------------------------------------------------------------
# Bordered banded Jacobian
# --------------------------------------------------------------------------

@dataclass
class BorderedBandMatrix:
    """Banded core (interleaved ``g_1, m_1, g_2, m_2, ...``) plus one border.

    ``band`` is LAPACK band storage with two sub- and two super-diagonals.
    ``col`` holds d(core rows)/d(eta1), ``row`` d(constraint)/d(core
    unknowns), both in interleaved order, and ``corner`` d(constraint)/d(eta1).
    Public methods speak block order (all ``g``, then all ``m``, then eta1).
    """

    band: np.ndarray
    col: np.ndarray
    row: np.ndarray
    corner: float

    @property
    def n_core(self) -> int:
        return self.band.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        n = self.n_core + 1
        return n, n

    def _perm(self) -> np.ndarray:
        # interleaved position -> block position
        half = self.n_core // 2
        perm = np.empty(self.n_core, dtype=int)
        perm[0::2] = np.arange(half)
        perm[1::2] = half + np.arange(half)
        return perm

    def core_dense(self) -> np.ndarray:
        n = self.n_core
        A = np.zeros((n, n))
        for off in range(-2, 3):
            diag = self.band[2 - off]
            if off >= 0:
                idx = np.arange(n - off)
                A[idx, idx + off] = diag[off:]
            else:
                idx = np.arange(-off, n)
                A[idx, idx + off] = diag[: n + off]
        return A

    def to_dense(self) -> np.ndarray:
        """Full Jacobian in block order, matching ``ResidualVector.vector``."""
        n = self.n_core
        perm = self._perm()
        full = np.zeros((n + 1, n + 1))
        inter = np.zeros((n + 1, n + 1))
        inter[:n, :n] = self.core_dense()
        inter[:n, n] = self.col
        inter[n, :n] = self.row
        inter[n, n] = self.corner
        order = np.concatenate((perm, [n]))
        full[np.ix_(order, order)] = inter
        return full

    def scale_columns(self, d: np.ndarray) -> "BorderedBandMatrix":
        """Return ``J @ diag(d)`` for ``d`` in block order."""
        n = self.n_core
        d_int = d[self._perm()]
        return BorderedBandMatrix(self.band * d_int[None, :], self.col * d[n], self.row * d_int, self.corner * d[n])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``J x = rhs`` by block elimination of the border.

        Raises ``numpy.linalg.LinAlgError`` when the core or the Schur
        complement is singular.
        """
        n = self.n_core
        perm = self._perm()
        f = rhs[perm]
        e = rhs[n]
        sol = solve_banded((2, 2), self.band, np.column_stack((f, self.col)), check_finite=True)
        zf, zc = sol[:, 0], sol[:, 1]
        schur = self.corner - self.row @ zc
        if schur == 0.0 or not math.isfinite(schur):
            raise np.linalg.LinAlgError("singular Schur complement in bordered solve")
        y = (e - self.row @ zf) / schur
        x_int = zf - zc * y
        out = np.empty(n + 1)
        out[perm] = x_int
        out[n] = y
        return out


def assemble_jacobian(
    state: StateVector,
    problem: ProblemSpec,
    k: float,
    grid: Grid,
    *,
    flux: str = "mean",
) -> BorderedBandMatrix:
    """Analytic Jacobian of :func:`assemble_residual` w.r.t. block unknowns."""
    check_state(state, problem, k, grid)
    rh, h, N = grid.r_half, grid.h, grid.N
    j, c = problem.j, problem.theta * problem.j
    g, m = state.full_g(), state.full_m(problem.eta0)

    _, gl, gr = _flux(g, k * j * j, rh, h, flux)
    _, pg = _drift(g, c, rh)
    _, ml, mr = _flux(m, j * j, rh, h, flux)
    _, pm = _drift(m, c, rh)

    n = 2 * (N - 1)
    band = np.zeros((5, n))
    # A[row, col] sits in band[2 + row - col, col]
    ie = np.arange(N - 1)  # electron row for node i = ie + 1 sits at 2*ie
    # half-node index i-1/2 -> i-1 ; i+1/2 -> i   (node i = ie + 1)
    lo, hi = ie, ie + 1
    e_diag = (gl[hi] + pg[hi] - gr[lo] - pg[lo]) / h - 1.0
    e_left = -(gl[lo] + pg[lo]) / h
    e_right = (gr[hi] + pg[hi]) / h
    h_diag = (ml[hi] - pm[hi] - mr[lo] + pm[lo]) / h - 1.0
    h_left = -(ml[lo] - pm[lo]) / h
    h_right = (mr[hi] - pm[hi]) / h

    re, rhole = 2 * ie, 2 * ie + 1
    band[2, re] = e_diag
    band[2, rhole] = h_diag
    # electron row -> m_i (col = row + 1)
    band[1, re + 1] = 1.0
    # hole row -> g_i (col = row - 1)
    band[3, rhole - 1] = 1.0
    # electron row -> g_{i-1} (col = row - 2), g_{i+1} (col = row + 2)
    band[4, re[1:] - 2] = e_left[1:]
    band[0, re[:-1] + 2] = e_right[:-1]
    band[4, rhole[1:] - 2] = h_left[1:]
    band[0, rhole[:-1] + 2] = h_right[:-1]

    col = np.zeros(n)
    col[rhole[-1]] = h_right[-1]

    w = grid.trapezoid_weights
    row = np.zeros(n)
    row[re] = -c * w[1:-1] / g[1:-1] ** 2
    row[rhole] = c * w[1:-1] / m[1:-1] ** 2
    corner = float(dphi(m[-1], j * j) + c * w[-1] / m[-1] ** 2)
    return BorderedBandMatrix(band, col, row, corner)


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------

def first_integral_c(state: StateVector, problem: ProblemSpec, grid: Grid) -> float:
    """Constant ``c`` of the integrated momentum balance; zero for a solution."""
    g, m = state.full_g(), state.full_m(problem.eta0)
    eps0 = grid.epsilon0
    return constraint_value(g, m, problem, grid) * eps0 / (1.0 - eps0)


def pointwise_identity_residual(
    state: StateVector, problem: ProblemSpec, grid: Grid, k: float = 1.0
) -> float:
    """Max over interior nodes of the summed momentum identity (centred differences)."""
    r, h = grid.r, grid.h
    j, c = problem.j, problem.theta * problem.j
    g, m = state.full_g(), state.full_m(problem.eta0)
    gi, mi, ri = g[1:-1], m[1:-1], r[1:-1]
    g_r = (g[2:] - g[:-2]) / (2 * h)
    m_r = (m[2:] - m[:-2]) / (2 * h)
    val = dphi(gi, k * j * j) * g_r + dphi(mi, j * j) * m_r + c * (1.0 / gi - 1.0 / mi) - 4.0 / ri
    return float(np.max(np.abs(val)))


_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def weak_form_residual(
    state: StateVector,
    problem: ProblemSpec,
    grid: Grid,
    k: float = 1.0,
    *,
    source=None,
) -> tuple[float, float]:
    """Largest weak-form defect of each balance over all hat functions."""
    we, wh = weak_form_defects(state, problem, grid, k, source=source)
    return float(np.max(np.abs(we))), float(np.max(np.abs(wh)))


def weak_form_defects(
    state: StateVector,
    problem: ProblemSpec,
    grid: Grid,
    k: float = 1.0,
    *,
    source=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weak-form defects of both momentum balances, one per interior hat function.

    Cell integrals use two-point Gauss rules on the piecewise-linear
    interpolants.  With ``k == 1`` the electron flux in the two boundary cells
    is written as ``r^2 (g+1)/(2 g^3) ((g-1)^2)_r`` so that only ``(g-1)^2``
    is differentiated there.  ``source`` is an optional pair of callables
    ``(S_e, S_h)`` of ``r`` added as ``int S phi``.
    """
    r, h, N = grid.r, grid.h, grid.N
    j, c = problem.j, problem.theta * problem.j
    g, m = state.full_g(), state.full_m(problem.eta0)
    ae, ah = k * j * j, j * j

    flux_e = np.zeros(N)
    flux_h = np.zeros(N)
    # react[c, 0] pairs with the basis function rising on cell c (node c+1),
    # react[c, 1] with the one falling on it (node c)
    react_e = np.zeros((N, 2))
    react_h = np.zeros((N, 2))
    dg = (g[1:] - g[:-1]) / h
    dm = (m[1:] - m[:-1]) / h
    dsq = ((g[1:] - 1.0) ** 2 - (g[:-1] - 1.0) ** 2) / h
    for t in _GAUSS:
        rq = r[:-1] + t * h
        gq = g[:-1] + t * (g[1:] - g[:-1])
        mq = m[:-1] + t * (m[1:] - m[:-1])
        Bq = problem.doping(rq)
        coef_e = dphi(gq, ae) * dg
        if k == 1.0:
            alt = (gq + 1.0) / (2.0 * gq**3) * dsq
            coef_e[0], coef_e[-1] = alt[0], alt[-1]
        Qe = rq * rq * coef_e + c * rq * rq / gq - 2.0 * rq
        Qh = rq * rq * dphi(mq, ah) * dm - c * rq * rq / mq - 2.0 * rq
        flux_e += 0.5 * h * Qe
        flux_h += 0.5 * h * Qh
        fe = gq - mq - Bq
        fh = mq + Bq - gq
        if source is not None:
            fe = fe + source[0](rq)
            fh = fh + source[1](rq)
        react_e[:, 0] += 0.5 * h * fe * t
        react_e[:, 1] += 0.5 * h * fe * (1.0 - t)
        react_h[:, 0] += 0.5 * h * fh * t
        react_h[:, 1] += 0.5 * h * fh * (1.0 - t)
    # basis at node i: rising on cell i-1 (slope +1/h), falling on cell i (slope -1/h)
    we = (flux_e[:-1] - flux_e[1:]) / h + react_e[:-1, 0] + react_e[1:, 1]
    wh = (flux_h[:-1] - flux_h[1:]) / h + react_h[:-1, 0] + react_h[1:, 1]
    return we, wh
