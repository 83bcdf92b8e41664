"""JSON run configuration and deterministic artifact writers.

Configuration layout (every block except ``problem`` is optional)::

    {
      "problem":    {"epsilon0": 0.5, "theta": 1.0, "j": 1.0,
                     "eta0": 3.0 | {"eta_star_plus": 1.0},
                     "m_lower": 2.0, "doping": {"kind": "constant", "value": 1.0}},
      "numerics":   {"N": 800, "k": 0.5, "k_schedule": [...], "tol": 1e-10,
                     "max_iterations": 50, "flux": "potential", "seed": 0},
      "thresholds": {"eta_bar": 2.0, "B_upper": 1.0, "k": 1.0},
      "oracle":     {"steps": 4000, "bracket": [lo, hi]},
      "scan":       {"eta0_values": [...], "bump_levels": [...], "seeds": 3},
      "uniqueness": {"n_seeds": 10, "rel_tol": 1e-8}
    }

``eta0`` given as ``{"eta_star_plus": d}`` resolves to ``eta_star + d`` with
``eta_star`` evaluated at ``k = 1`` and ``B_upper`` equal to the doping
supremum.  Unknown keys anywhere raise :class:`ConfigError`.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, SonicEPError
from .model import DopingProfile, ProblemSpec

_SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "epsilon0": (True, (int, float)),
        "theta": (True, (int, float)),
        "j": (False, (int, float)),
        "eta0": (True, (int, float, dict)),
        "m_lower": (False, (int, float)),
        "doping": (False, dict),
    },
    "numerics": {
        "N": (False, int),
        "k": (False, (int, float)),
        "k_schedule": (False, list),
        "tol": (False, (int, float)),
        "max_iterations": (False, int),
        "flux": (False, str),
        "seed": (False, int),
    },
    "thresholds": {
        "eta_bar": (False, (int, float)),
        "B_upper": (False, (int, float)),
        "k": (False, (int, float)),
    },
    "oracle": {
        "steps": (False, int),
        "bracket": (False, list),
    },
    "scan": {
        "eta0_values": (True, list),
        "bump_levels": (True, list),
        "seeds": (False, int),
    },
    "uniqueness": {
        "n_seeds": (False, int),
        "rel_tol": (False, (int, float)),
    },
}


def _check_block(name: str, block: Any) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: expected an object")
    schema = _SCHEMA[name]
    for key in block:
        if key not in schema:
            raise ConfigError(f"{name}.{key}: unknown key")
    for key, (required, types) in schema.items():
        if key not in block:
            if required:
                raise ConfigError(f"{name}.{key}: missing required key")
            continue
        val = block[key]
        if isinstance(val, bool) or not isinstance(val, types):
            raise ConfigError(f"{name}.{key}: wrong type {type(val).__name__}")
    return block


@dataclass(frozen=True)
class Numerics:
    N: int = 800
    k: float = 0.5
    k_schedule: tuple[float, ...] | None = None
    tol: float = 1e-10
    max_iterations: int = 50
    flux: str = "potential"
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    numerics: Numerics = field(default_factory=Numerics)
    thresholds: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    uniqueness: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        num = Numerics(**{**self.numerics.__dict__, "seed": int(seed)})
        return RunConfig(self.problem, num, self.thresholds, self.oracle, self.scan, self.uniqueness, self.raw)


def _resolve_eta0(spec: Any, base: dict) -> float:
    if not isinstance(spec, dict):
        return float(spec)
    extra = set(spec) - {"eta_star_plus"}
    if extra:
        raise ConfigError(f"problem.eta0.{sorted(extra)[0]}: unknown key")
    if "eta_star_plus" not in spec:
        raise ConfigError("problem.eta0.eta_star_plus: missing required key")
    from .analysis import eta_star

    doping = base["doping"]
    try:
        es = eta_star(base["m_lower"], doping.sup, base["theta"], base["epsilon0"], 1.0)
    except SonicEPError as exc:
        raise ConfigError(f"problem.eta0: {exc}") from exc
    return es + float(spec["eta_star_plus"])


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded JSON document and build a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected an object")
    for key in data:
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown key")
    if "problem" not in data:
        raise ConfigError("problem: missing required key")
    p = _check_block("problem", data["problem"])
    blocks = {name: _check_block(name, data[name]) if name in data else {} for name in _SCHEMA if name != "problem"}
    try:
        doping = DopingProfile.from_dict(p["doping"]) if "doping" in p else DopingProfile.constant(1.0)
    except SonicEPError as exc:
        msg = str(exc)
        raise ConfigError(f"problem.{msg}" if msg.startswith("doping") else f"problem.doping: {msg}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem.doping: {exc}") from exc
    base = {
        "epsilon0": float(p["epsilon0"]),
        "theta": float(p["theta"]),
        "j": float(p.get("j", 1.0)),
        "m_lower": float(p.get("m_lower", 2.0)),
        "doping": doping,
    }
    try:
        problem = ProblemSpec(eta0=_resolve_eta0(p["eta0"], base), **base)
    except ConfigError:
        raise
    except SonicEPError as exc:
        raise ConfigError(str(exc)) from exc

    nb = blocks["numerics"]
    num = Numerics(
        N=nb.get("N", 800),
        k=float(nb.get("k", 0.5)),
        k_schedule=tuple(float(v) for v in nb["k_schedule"]) if "k_schedule" in nb else None,
        tol=float(nb.get("tol", 1e-10)),
        max_iterations=nb.get("max_iterations", 50),
        flux=nb.get("flux", "potential"),
        seed=nb.get("seed", 0),
    )
    if num.k_schedule is not None:
        from .solver import ContinuationSchedule

        try:
            ContinuationSchedule(num.k_schedule)
        except SonicEPError as exc:
            raise ConfigError(f"numerics.k_schedule: {exc}") from exc
    if num.N < 8:
        raise ConfigError("numerics.N: must be >= 8")
    if not 0.0 < num.k < 1.0:
        raise ConfigError("numerics.k: must lie in (0, 1)")
    if num.flux not in ("mean", "potential"):
        raise ConfigError(f"numerics.flux: unknown flux form {num.flux!r}")
    if not num.tol > 0:
        raise ConfigError("numerics.tol: must be positive")
    if num.max_iterations < 1:
        raise ConfigError("numerics.max_iterations: must be >= 1")
    if num.seed < 0 or num.seed >= 2**64:
        raise ConfigError("numerics.seed: must be an unsigned 64-bit integer")
    return RunConfig(
        problem=problem,
        numerics=num,
        thresholds=blocks["thresholds"],
        oracle=blocks["oracle"],
        scan=blocks["scan"],
        uniqueness=blocks["uniqueness"],
        raw=data,
    )


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(data)


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------

def fmt(x: Any) -> str:
    """Cell text: floats at 17 significant digits, everything else ``str``."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return str(x)


def write_csv(path: str | os.PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


def jsonable(obj: Any) -> Any:
    """Convert to plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: str | os.PathLike, obj: Any) -> None:
    text = json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text + "\n")
