"""Command-line front end: ``mining-auction {simulate,solve,check,scan}``.

Exit codes: 0 success, 2 invalid scenario, 3 solver did not converge,
4 numerical singularity, 5 Monte Carlo requested without a seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, scenario as scn
from .model import NonDifferentiableError, difficulty, profile_grid
from .qre import BidGrid, solve_qre
from .race import (
    MissingSeedError,
    exact_win_prob,
    first_success_win_prob,
    rationality_check,
    simulate_races,
    utility,
)

log = logging.getLogger("mining_auction")

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_SINGULAR = 4
EXIT_NO_SEED = 5


class SingularityError(RuntimeError):
    pass


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: Path, kind: str, body: dict):
    doc = {"schema_version": SCHEMA_VERSION, "report": kind, **body}
    path.write_text(json.dumps(_plain(doc), indent=2) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.bool_, bool)):
        return "true" if v else "false"
    return str(v)


def write_csv(path: Path, header: list, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _plot_dir(out: Path) -> Path:
    d = out / "plot"
    d.mkdir(exist_ok=True)
    return d


# -- commands --------------------------------------------------------------


def cmd_simulate(s: scn.Scenario, out: Path, workers: int = 1, emit_plot_data: bool = False) -> int:
    if s.simulation is None:
        raise scn.ScenarioError("simulation", "section required by simulate")
    sim = s.simulation
    params, alloc, c = s.params, s.alloc, s.profile
    try:
        dv = difficulty(alloc, c)
    except ValueError as exc:
        raise SingularityError(str(exc)) from None
    K = params.horizon
    exact = exact_win_prob(dv, K).q if sim.semantics == "exact-at-K" else first_success_win_prob(dv, K).q
    res = simulate_races(dv, K, sim.trials, sim.seed, sim.semantics, workers=workers)
    U = utility(params.prize, K, c.costs, exact)
    flags = rationality_check(U)
    write_json(out / "simulate.json", "simulate", {
        "semantics": sim.semantics,
        "trials": sim.trials,
        "seed": sim.seed,
        "allocation": alloc.to_dict(),
        "f": dv.f,
        "p": dv.p,
        "q_exact": exact,
        "q_hat": res.q_hat,
        "stderr": res.stderr,
        "wins": res.wins,
        "utility": U,
        "irrational": flags,
    })
    write_csv(out / "simulate.csv",
              ["miner", "cost", "p", "q_exact", "q_hat", "stderr", "utility", "irrational"],
              [(i, c.costs[i], dv.p[i], exact[i], res.q_hat[i], res.stderr[i], U[i], flags[i])
               for i in range(c.n)])
    return EXIT_OK


def _grid_for(s: scn.Scenario) -> BidGrid:
    v = s.solver
    c_max = v.c_max if v.c_max is not None else s.params.prize / s.params.horizon
    if v.spacing == "log":
        return BidGrid.log(c_max, v.grid_points)
    return BidGrid.uniform(c_max, v.grid_points)


def _solve(s: scn.Scenario, workers: int):
    v = s.solver or scn.SolverSection()
    if s.solver is None:
        s.solver = v
    return solve_qre(s.alloc, s.params, s.n_miners, grid=_grid_for(s), damping=v.damping,
                     tol=v.tol, max_iter=v.max_iter, seed=v.seed, mc_samples=v.mc_samples,
                     workers=workers)


def cmd_solve(s: scn.Scenario, out: Path, workers: int = 1, emit_plot_data: bool = False) -> int:
    if s.solver is None:
        raise scn.ScenarioError("solver", "section required by solve")
    sol = _solve(s, workers)
    n = len(sol.densities)
    pts = sol.grid.points
    write_json(out / "solve.json", "solve", {
        "converged": sol.converged,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "tol": sol.tol,
        "damping": sol.damping,
        "n_miners": n,
        "grid": {"points": sol.grid.size, "c_max": sol.grid.c_max, "spacing": sol.grid.spacing},
        "auction": {"prize": s.params.prize, "horizon": s.params.horizon, "mu": s.params.mu},
        "allocation": s.alloc.to_dict(),
        "mean_bid": [d.mean() for d in sol.densities],
        "tv_to_uniform": [d.tv_to_uniform() for d in sol.densities],
    })
    write_csv(out / "densities.csv", ["cost"] + [f"weight_{i}" for i in range(n)],
              [(pts[k], *sol.weights[:, k]) for k in range(pts.size)])
    write_csv(out / "utilities.csv", ["cost"] + [f"utility_{i}" for i in range(n)],
              [(pts[k], *sol.utilities_on_grid[:, k]) for k in range(pts.size)])
    if emit_plot_data:
        d = _plot_dir(out)
        for i in range(n):
            dens = sol.densities[i].density()
            write_csv(d / f"cost_density_{i}.csv", ["x", "y"], zip(pts, dens))
            write_csv(d / f"cost_utility_{i}.csv", ["x", "y"], zip(pts, sol.utilities_on_grid[i]))
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _cost_grid(s: scn.Scenario):
    if s.miners.cost_values is not None:
        return profile_grid(s.miners.cost_values, s.n_miners)
    return [s.profile]


def cmd_check(s: scn.Scenario, out: Path, workers: int = 1, emit_plot_data: bool = False) -> int:
    if s.analysis is None or not s.analysis.conditions:
        raise scn.ScenarioError("analysis.conditions", "list at least one condition id")
    if s.miners.cost_values is None and s.miners.costs is None and any(
            c != "pi-derivative" for c in s.analysis.conditions):
        raise scn.ScenarioError("miners", "costs or cost_values required by check")
    alloc, params, tol = s.alloc, s.params, s.analysis.tol
    reports = []
    for cid in s.analysis.conditions:
        if cid == "pi-derivative":
            sol = _solve(s, workers)
            if not sol.converged:
                log.warning("pi-derivative evaluated on a non-converged solution")
            reports.append(analysis.check_pi_derivative(sol).to_dict())
            continue
        grid = _cost_grid(s)
        if cid == "quad":
            cells = [c for c in grid if np.all(c.costs > 0)]
            if not cells:
                raise SingularityError("quad needs a profile with every cost > 0")
            reports.append({
                "condition": "quad",
                "cells": [{"costs": c.costs.tolist(),
                           **analysis.quadratic_feasibility(params, c).to_dict()} for c in cells],
            })
            continue
        fn = {
            "prop1": lambda: analysis.check_prop1(alloc, params, grid),
            "lemma1": lambda: analysis.check_lemma1(alloc, grid, tol=tol),
            "lemma2": lambda: analysis.check_lemma2(alloc, grid, tol=tol),
            "logderiv": lambda: analysis.check_logderiv_bound(alloc, params, grid),
        }[cid]
        reports.append(fn().to_dict())
    write_json(out / "check.json", "check", {"allocation": alloc.to_dict(), "reports": reports})
    return EXIT_OK


def cmd_scan(s: scn.Scenario, out: Path, workers: int = 1, emit_plot_data: bool = False) -> int:
    if s.analysis is None or s.analysis.scan is None:
        raise scn.ScenarioError("analysis.scan", "scan box required by scan")
    rep = analysis.scan_theorem(s.scan_box, workers=workers)
    write_json(out / "scan.json", "scan", rep.to_dict())
    cells = rep.cells
    cols = ["prize", "horizon", "miners", "c_min", "c_other", "c_tot", "b", "d",
            "discriminant", "margin", "feasible", "agrees"]
    write_csv(out / "scan_cells.csv", cols, zip(*[cells[k] for k in cols]))
    if emit_plot_data:
        write_csv(_plot_dir(out) / "b_margin.csv", ["x", "y"], zip(cells["b"], cells["margin"]))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "check": cmd_check, "scan": cmd_scan}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mining-auction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory (default: output.directory or .)")
        p.add_argument("--seed", type=int, default=None, help="override simulation/solver seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--emit-plot-data", action="store_true", help="write (x, y) series files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        s = scn.load(args.scenario)
        if args.seed is not None:
            if s.simulation is not None:
                s.simulation.seed = args.seed
            if s.solver is not None:
                s.solver.seed = args.seed
        out = Path(args.out or s.output.directory or ".")
        out.mkdir(parents=True, exist_ok=True)
        emit = args.emit_plot_data or s.output.emit_plot_data
        return COMMANDS[args.command](s, out, workers=max(1, args.threads), emit_plot_data=emit)
    except scn.ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MissingSeedError as exc:
        print(f"missing seed: {exc}", file=sys.stderr)
        return EXIT_NO_SEED
    except (SingularityError, NonDifferentiableError, FloatingPointError) as exc:
        print(f"numerical singularity: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
