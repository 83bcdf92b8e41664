"""Domain types and scalar kernels of the radial bipolar Euler-Poisson model.

Densities are carried in the transformed variables ``g = r**2 * rho`` and
``m = r**2 * n``; the doping enters as ``B = r**2 * b``.  Temperature is
normalised to one and the electron/hole currents are ``j`` and ``-j``.
``theta`` is the inverse relaxation time, so ``theta == 0`` is the
frictionless (tau = infinity) case.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DomainError, NoSolutionError, ParameterError

SONIC_TOL = 1e-14


# --------------------------------------------------------------------------
# The potential family  Phi(h; a) = ln h + a / (2 h^2)
# --------------------------------------------------------------------------

def eval_phi(h, a: float):
    """Evaluate ``ln h + a / (2 h**2)``.

    ``a = 1`` is the sonic enthalpy ``w``, ``a = k`` its regularisation
    ``w_k`` and ``a = j**2`` the current-dependent ``F``.  Works on scalars
    and arrays.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(~(h_arr > 0)):
        raise DomainError(f"eval_phi requires h > 0, got min {np.min(h_arr)!r}")
    out = np.log(h_arr) + a / (2.0 * h_arr * h_arr)
    return float(out) if out.ndim == 0 else out


def dphi(h, a: float):
    """Derivative ``(h**2 - a) / h**3`` of :func:`eval_phi`."""
    h_arr = np.asarray(h, dtype=float)
    out = (h_arr * h_arr - a) / h_arr**3
    return float(out) if out.ndim == 0 else out


def invert_phi(target: float, a: float) -> float:
    """Return the unique ``h >= 1`` with ``eval_phi(h, a) == target``.

    Requires ``0 <= a <= 1`` so that the potential is increasing on
    ``[1, inf)``.  The root is bracketed in ``x = ln h`` by
    ``[max(0, target - a/2), target]`` (because ``ln h <= Phi <= ln h + a/2``
    there), bisected, then polished by Newton until the step is below
    ``1e-12 * max(1, h)``.
    """
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"invert_phi needs a in [0, 1], got {a!r}")
    target = float(target)
    if not math.isfinite(target):
        raise NoSolutionError(f"non-finite target {target!r}")
    floor = 0.5 * a
    if target < floor:
        raise NoSolutionError(f"target {target!r} below the minimum {floor!r} on [1, inf)")
    if target == floor:
        return 1.0

    def resid(x: float) -> float:
        return x + floor * math.exp(-2.0 * x) - target

    lo, hi = max(0.0, target - floor), target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-6:
            break
    x = 0.5 * (lo + hi)
    for _ in range(50):
        slope = 1.0 - a * math.exp(-2.0 * x)
        if slope <= 0.0:
            break
        step = resid(x) / slope
        x_new = min(max(x - step, lo), hi)
        if abs(math.exp(x_new) - math.exp(x)) <= 1e-12 * max(1.0, math.exp(x_new)):
            x = x_new
            break
        x = x_new
    return math.exp(x)


# --------------------------------------------------------------------------
# Flow classification, transforms, field recovery
# --------------------------------------------------------------------------

class FlowClass(str, enum.Enum):
    SUBSONIC = "subsonic"
    SONIC = "sonic"
    SUPERSONIC = "supersonic"


def classify_flow(g_value: float, j: float) -> FlowClass:
    """Classify the flow at a point from the transformed density.

    The velocity is ``u = j / g`` with unit sound speed, so ``g > j`` is
    subsonic.  Equality is decided with an absolute tolerance of 1e-14.
    """
    if not g_value > 0:
        raise DomainError(f"density must be positive, got {g_value!r}")
    if abs(g_value - j) <= SONIC_TOL:
        return FlowClass.SONIC
    return FlowClass.SUBSONIC if g_value > j else FlowClass.SUPERSONIC


def recover_E(r, g, g_r, theta: float, j: float = 1.0, k: float = 1.0):
    """Electric field from the electron momentum balance.

    ``E = (1/g - k j**2 / g**3) g_r + theta j / g - 2 / r``; ``k = 1`` is the
    unregularised law.
    """
    r_arr = np.asarray(r, dtype=float)
    g_arr = np.asarray(g, dtype=float)
    if np.any(r_arr <= 0) or np.any(g_arr <= 0):
        raise DomainError("recover_E requires r > 0 and g > 0")
    coef = 1.0 / g_arr - k * j * j / g_arr**3
    out = coef * np.asarray(g_r, dtype=float) + theta * j / g_arr - 2.0 / r_arr
    return float(out) if out.ndim == 0 else out


def to_transformed(rho, r):
    """``g = r**2 rho`` (same map for holes)."""
    rho_a, r_a = np.asarray(rho, dtype=float), np.asarray(r, dtype=float)
    if np.any(rho_a <= 0) or np.any(r_a <= 0):
        raise DomainError("to_transformed requires rho > 0 and r > 0")
    out = r_a * r_a * rho_a
    return float(out) if out.ndim == 0 else out


def from_transformed(g, r):
    """Inverse of :func:`to_transformed`."""
    g_a, r_a = np.asarray(g, dtype=float), np.asarray(r, dtype=float)
    if np.any(g_a <= 0) or np.any(r_a <= 0):
        raise DomainError("from_transformed requires g > 0 and r > 0")
    out = g_a / (r_a * r_a)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Doping
# --------------------------------------------------------------------------

DOPING_KINDS = ("constant", "piecewise-linear", "bump")


@dataclass(frozen=True)
class DopingProfile:
    """Radially weighted doping ``B(r) = r**2 b(r)``.

    ``bump`` profiles take ``level`` on the open interval ``(alpha, beta)``
    and ``base`` elsewhere.  Jumps are right-continuous.
    """

    kind: str
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    base: float = 0.0
    level: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in DOPING_KINDS:
            raise ParameterError(f"unknown doping kind {self.kind!r}")
        if self.kind == "constant":
            if len(self.values) != 1 or not math.isfinite(self.values[0]):
                raise ParameterError("constant doping needs exactly one finite value")
        elif self.kind == "piecewise-linear":
            bp = np.asarray(self.breakpoints, dtype=float)
            if len(bp) < 2 or len(bp) != len(self.values):
                raise ParameterError("piecewise-linear doping needs matching breakpoints/values (>= 2)")
            if np.any(np.diff(bp) <= 0):
                raise ParameterError("doping breakpoints must be strictly increasing")
            if not np.all(np.isfinite(self.values)):
                raise ParameterError("doping values must be finite")
        else:
            if not self.alpha < self.beta:
                raise ParameterError("bump interval needs alpha < beta")
            if not (math.isfinite(self.base) and math.isfinite(self.level)):
                raise ParameterError("bump levels must be finite")

    @classmethod
    def constant(cls, value: float) -> "DopingProfile":
        return cls("constant", values=(float(value),))

    @classmethod
    def piecewise_linear(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "DopingProfile":
        return cls("piecewise-linear", tuple(map(float, breakpoints)), tuple(map(float, values)))

    @classmethod
    def bump(cls, base: float, level: float, alpha: float, beta: float) -> "DopingProfile":
        return cls("bump", base=float(base), level=float(level), alpha=float(alpha), beta=float(beta))

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if self.kind == "constant":
            out = np.full_like(r_arr, self.values[0])
        elif self.kind == "piecewise-linear":
            out = np.interp(r_arr, self.breakpoints, self.values)
        else:
            inside = (r_arr > self.alpha) & (r_arr < self.beta)
            out = np.where(inside, self.level, self.base)
        return float(out) if out.ndim == 0 else out

    @property
    def sup(self) -> float:
        """Essential supremum of B."""
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "piecewise-linear":
            return max(self.values)
        return max(self.base, self.level)

    @property
    def inf(self) -> float:
        """Essential infimum of B."""
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "piecewise-linear":
            return min(self.values)
        return min(self.base, self.level)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.values[0]}
        if self.kind == "piecewise-linear":
            return {"kind": "piecewise-linear", "breakpoints": list(self.breakpoints), "values": list(self.values)}
        return {"kind": "bump", "base": self.base, "level": self.level, "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DopingProfile":
        allowed = {
            "constant": {"kind", "value"},
            "piecewise-linear": {"kind", "breakpoints", "values"},
            "bump": {"kind", "base", "level", "alpha", "beta"},
        }
        kind = data.get("kind")
        if kind not in allowed:
            raise ParameterError(f"doping.kind: unknown kind {kind!r}")
        extra = set(data) - allowed[kind]
        if extra:
            raise ParameterError(f"doping: unknown key(s) {sorted(extra)}")
        missing = allowed[kind] - set(data)
        if missing:
            raise ParameterError(f"doping: missing key(s) {sorted(missing)}")
        if kind == "constant":
            return cls.constant(data["value"])
        if kind == "piecewise-linear":
            return cls.piecewise_linear(data["breakpoints"], data["values"])
        return cls.bump(data["base"], data["level"], data["alpha"], data["beta"])


def doping_eval(profile: DopingProfile, r, epsilon0: float):
    """Evaluate ``B(r)`` with a domain check against ``[epsilon0, 1]``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < epsilon0) or np.any(r_arr > 1.0):
        raise DomainError(f"r outside [{epsilon0}, 1]")
    return profile(r)


# --------------------------------------------------------------------------
# Problem and solution containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """All physical and boundary data of one boundary-value instance.

    The electron boundary value is ``g = 1`` for every ``j``; it is sonic
    only when ``j = 1`` and non-degenerate for ``j < 1``.
    """

    epsilon0: float
    theta: float
    j: float
    eta0: float
    doping: DopingProfile = field(default_factory=lambda: DopingProfile.constant(1.0))
    m_lower: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.epsilon0 < 1.0:
            raise ParameterError("epsilon0 must lie in (0, 1)")
        if not self.eta0 > 1.0:
            raise ParameterError("eta0 must exceed 1")
        if not self.theta >= 0.0:
            raise ParameterError("theta must be non-negative")
        if not 0.0 < self.j <= 1.0:
            raise ParameterError("j must lie in (0, 1]")
        if not self.m_lower > 1.0:
            raise ParameterError("m_lower must exceed 1")
        d = self.doping
        if d.kind == "bump" and not (self.epsilon0 <= d.alpha and d.beta <= 1.0):
            raise ParameterError("bump interval must lie within [epsilon0, 1]")

    def B(self, r):
        return doping_eval(self.doping, r, self.epsilon0)

    def replace(self, **changes) -> "ProblemSpec":
        data = {f: getattr(self, f) for f in ("epsilon0", "theta", "j", "eta0", "doping", "m_lower")}
        data.update(changes)
        return ProblemSpec(**data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon0": self.epsilon0,
            "theta": self.theta,
            "j": self.j,
            "eta0": self.eta0,
            "m_lower": self.m_lower,
            "doping": self.doping.to_dict(),
        }


@dataclass
class SolutionFields:
    """Nodal fields of a discrete solution, physical and transformed.

    ``v`` is stored as the hole speed ``j / m``.
    """

    r: np.ndarray
    g: np.ndarray
    m: np.ndarray
    eta1: float
    E: np.ndarray
    rho: np.ndarray
    n: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_arrays(cls, r, g, m, problem: ProblemSpec, k: float = 1.0) -> "SolutionFields":
        r = np.asarray(r, dtype=float)
        g = np.asarray(g, dtype=float)
        m = np.asarray(m, dtype=float)
        g_r = np.gradient(g, r, edge_order=2)
        E = recover_E(r, g, g_r, problem.theta, problem.j, k)
        return cls(
            r=r, g=g, m=m, eta1=float(m[-1]), E=E,
            rho=from_transformed(g, r), n=from_transformed(m, r),
            u=problem.j / g, v=problem.j / m,
        )
