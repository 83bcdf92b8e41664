"""Command-line driver.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence
(or, for ``verify``, a failed check).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, oracle, verify
from .config import RunConfig, load_config, write_csv, write_json
from .discretization import make_grid
from .errors import BracketError, ConfigError, SonicEPError
from .solver import (
    ContinuationSchedule,
    NewtonOptions,
    continuation_solve,
    multi_start_uniqueness,
    solve_cold,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
SOLUTION_COLUMNS = ("r", "g", "m", "E", "rho", "n", "u", "v")
TRAJECTORY_COLUMNS = ("r", "g", "m", "E")

log = logging.getLogger("sonicep")


def _opts(cfg: RunConfig) -> NewtonOptions:
    n = cfg.numerics
    return NewtonOptions(max_iterations=n.max_iterations, tol=n.tol, flux=n.flux)


def _write_solution(out: Path, sol, name: str = "solution.csv") -> None:
    cols = [getattr(sol, c) for c in SOLUTION_COLUMNS]
    write_csv(out / name, SOLUTION_COLUMNS, zip(*cols))


def _echo(cfg: RunConfig) -> dict:
    return {"problem": cfg.problem.to_dict(), "numerics": dict(cfg.numerics.__dict__)}


def _eta_bar(cfg: RunConfig) -> float:
    return float(cfg.thresholds.get("eta_bar", cfg.problem.eta0))


def _solve(cfg: RunConfig):
    grid = make_grid(cfg.problem.epsilon0, cfg.numerics.N)
    if cfg.numerics.k_schedule is not None:
        return continuation_solve(cfg.problem, grid, ContinuationSchedule(cfg.numerics.k_schedule), _opts(cfg))
    return solve_cold(cfg.problem, cfg.numerics.k, grid, _opts(cfg))


def cmd_solve(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    rep = _solve(cfg)
    report = {"config": _echo(cfg), "report": rep.summary()}
    if cfg.thresholds:
        ts = analysis.thresholds(cfg.problem, _eta_bar(cfg), B_upper=cfg.thresholds.get("B_upper"),
                                 k=float(cfg.thresholds.get("k", 1.0)))
        report["thresholds"] = ts.to_dict()
        ok, margin = analysis.necessary_condition(rep.solution, _eta_bar(cfg), cfg.problem.theta,
                                                  cfg.problem.epsilon0, cfg.problem.j)
        report["necessary_condition"] = {"holds": ok, "margin": margin,
                                         "applicable": cfg.problem.eta0 <= _eta_bar(cfg)}
    _write_solution(out, rep.solution)
    write_json(out / "report.json", report)
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_thresholds(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    t = cfg.thresholds
    ts = analysis.thresholds(cfg.problem, _eta_bar(cfg), B_upper=t.get("B_upper"), k=float(t.get("k", 1.0)))
    inputs = _echo(cfg)
    inputs["eta_bar"] = _eta_bar(cfg)
    inputs["B_upper"] = float(t.get("B_upper", cfg.problem.doping.sup))
    inputs["k"] = float(t.get("k", 1.0))
    write_json(out / "report.json", {"inputs": inputs, "thresholds": ts.to_dict()})
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    k = cfg.numerics.k
    steps = cfg.oracle.get("steps", 4000)
    if k > 0.9:
        raise ConfigError(f"numerics.k: shooting oracle requires k <= 0.9, got {k!r}")
    if steps < 100:
        raise ConfigError(f"oracle.steps: need at least 100 RK4 steps, got {steps!r}")
    bracket = cfg.oracle.get("bracket")
    if bracket is not None and (len(bracket) != 2 or not all(isinstance(v, (int, float)) for v in bracket)):
        raise ConfigError("oracle.bracket: expected two numbers")
    grid = make_grid(cfg.problem.epsilon0, cfg.numerics.N)
    rep = solve_cold(cfg.problem, k, grid, _opts(cfg))
    summary = {"config": _echo(cfg), "collocation": rep.summary(), "steps": steps}
    code = EXIT_OK
    if not rep.converged:
        summary["shooting"] = {"status": "skipped"}
        code = EXIT_NUMERIC
    else:
        try:
            if bracket is None:
                bracket = oracle.find_bracket(cfg.problem, k, steps, float(rep.solution.E[0]))
            traj = oracle.shoot_match(cfg.problem, k, steps, tuple(bracket))
            diff = oracle.compare_with_collocation(traj, rep.solution, cfg.problem)
            summary["shooting"] = {"status": traj.status, "bracket": list(bracket),
                                   "iterations": traj.info.get("iterations")}
            summary["diff"] = diff
            write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, zip(traj.r, traj.g, traj.m, traj.E))
        except BracketError as exc:
            summary["shooting"] = {"status": "failed", "cause": str(exc)}
            code = EXIT_NUMERIC
    _write_solution(out, rep.solution)
    write_json(out / "report.json", summary)
    return code


def _scan_grid_and_values(cfg: RunConfig):
    s = cfg.scan
    if not s:
        raise ConfigError("scan: missing block")
    try:
        eta0s = [float(v) for v in s["eta0_values"]]
        levels = [float(v) for v in s["bump_levels"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scan: non-numeric value ({exc})") from exc
    if not eta0s:
        raise ConfigError("scan.eta0_values: empty list")
    if not levels:
        raise ConfigError("scan.bump_levels: empty list")
    if any(not v > 1.0 for v in eta0s):
        raise ConfigError("scan.eta0_values: eta0 must exceed 1")
    return make_grid(cfg.problem.epsilon0, cfg.numerics.N), eta0s, levels


def cmd_scan(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    grid, eta0s, levels = _scan_grid_and_values(cfg)
    seeds = cfg.scan.get("seeds", 3)
    if seeds < 1:
        raise ConfigError("scan.seeds: must be >= 1")
    cells = analysis.phase_scan(cfg.problem, eta0s, levels, grid, cfg.numerics.k, _opts(cfg),
                                seeds=seeds, seed=cfg.numerics.seed, threads=threads)
    write_csv(out / "scan.csv", analysis.SCAN_COLUMNS,
              ([getattr(c, f) for f in analysis.SCAN_COLUMNS] for c in cells))
    counts = {s: sum(c.status == s for c in cells) for s in ("exists", "not-found", "inconclusive")}
    write_json(out / "report.json", {"config": _echo(cfg), "cells": len(cells), "counts": counts,
                                     "seeds_per_cell": seeds})
    return EXIT_OK


def cmd_uniqueness(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    u = cfg.uniqueness
    n_seeds = u.get("n_seeds", 10)
    if n_seeds < 1:
        raise ConfigError("uniqueness.n_seeds: must be >= 1")
    grid = make_grid(cfg.problem.epsilon0, cfg.numerics.N)
    rep = multi_start_uniqueness(cfg.problem, grid, cfg.numerics.k, n_seeds, cfg.numerics.seed, _opts(cfg),
                                 rel_tol=float(u.get("rel_tol", 1e-8)), threads=threads)
    body = {"config": _echo(cfg), "uniqueness": rep.summary()}
    good = [r for r in rep.reports if r.converged]
    if cfg.problem.theta == 0.0 and len(good) >= 2:
        body["tau_infty_identity"] = max(
            analysis.tau_infty_identity_check(good[0].solution, r.solution) for r in good[1:]
        )
    if cfg.thresholds or cfg.problem.theta > 0.0:
        ts = analysis.thresholds(cfg.problem, _eta_bar(cfg))
        jt = cfg.problem.j * cfg.problem.theta
        body["j_tau"] = {"value": jt, "threshold": ts.j_tau_threshold, "C1": ts.C1, "C2": ts.C2,
                         "below_threshold": jt < ts.j_tau_threshold}
    write_json(out / "report.json", body)
    return EXIT_NUMERIC if rep.verdict == "inconclusive" else EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    checks = verify.run_checks(cfg.problem, cfg.numerics.N, cfg.numerics.k, _opts(cfg), seed=cfg.numerics.seed)
    write_json(out / "report.json", {"config": _echo(cfg), "checks": checks,
                                     "all_passed": all(c["passed"] for c in checks)})
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_NUMERIC


COMMANDS = {
    "solve": cmd_solve,
    "thresholds": cmd_thresholds,
    "oracle": cmd_oracle,
    "scan": cmd_scan,
    "uniqueness": cmd_uniqueness,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sonicep", description="Sonic-boundary bipolar Euler-Poisson solver")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for seeds / scan cells")
    ap.add_argument("--seed", type=int, default=None, help="u64 seed overriding numerics.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        cfg = load_config(args.config).with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SonicEPError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if code != EXIT_OK:
        print(f"{args.command}: finished with exit code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
