"""Numerical checks of the discouragement condition, the derivative lemmas
and the quadratic-infeasibility argument, with machine-readable verdicts."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import (
    AllocationSpec,
    AuctionParams,
    CostProfile,
    NonDifferentiableError,
    alloc_grad,
    central_difference,
    certify_lipschitz,
    difficulty,
    profile_grid,
)
from .qre import QreSolution
from .race import exact_win_prob

HOLDS = "holds"
FAILS = "fails"
UNDEFINED = "undefined"
VACUOUS = "hypothesis-not-met"

CONDITION_IDS = ("prop1", "lemma1", "lemma2", "logderiv", "quad", "pi-derivative")

DEFAULT_COST_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)


def default_cost_box(values=DEFAULT_COST_VALUES, miners=(2, 3)) -> list:
    """Every non-zero profile over ``values`` for each miner count."""
    return [c for n in miners for c in profile_grid(values, n)]


@dataclass
class ConditionReport:
    condition: str
    grid: dict
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, verdict: str, **values):
        self.rows.append({"verdict": verdict, **values})

    def verdicts(self) -> list:
        return [r["verdict"] for r in self.rows]

    def summary(self) -> dict:
        counts = {v: 0 for v in (HOLDS, FAILS, UNDEFINED, VACUOUS)}
        for r in self.rows:
            counts[r["verdict"]] += 1
        defined = counts[HOLDS] + counts[FAILS]
        margins = [r["margin"] for r in self.rows
                   if r["verdict"] in (HOLDS, FAILS) and "margin" in r]
        return {
            "points": len(self.rows),
            "counts": counts,
            "fraction_holding": counts[HOLDS] / defined if defined else None,
            "worst_margin": min(margins) if margins else None,
            "failing": [r for r in self.rows if r["verdict"] == FAILS],
        }

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "grid": self.grid,
            "summary": self.summary(),
            "rows": self.rows,
            **({"extra": self.extra} if self.extra else {}),
        }


def _grid_info(grid: Sequence[CostProfile]) -> dict:
    return {"n_profiles": len(grid), "n_miners": sorted({c.n for c in grid})}


def rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _fd_cols(analytic: float, fd: float) -> dict:
    return {"fd": float(fd), "fd_abs_err": float(abs(analytic - fd)),
            "fd_rel_err": float(rel_err(analytic, fd))}


# -- analytic derivatives ------------------------------------------------


def _rest_sums(c: np.ndarray) -> np.ndarray:
    # sum over j != i without the cancellation of total - c_i
    return np.array([np.delete(c, i).sum() for i in range(c.size)])


def _grads(alloc, c, step_scale):
    return np.array([alloc_grad(alloc, c, i, step_scale=step_scale) for i in range(c.n)])


def dp_own(alloc: AllocationSpec, c: CostProfile, step_scale: float = 1.0) -> np.ndarray:
    """dp_i/dc_i = f' c_i / T + f * sum_{j!=i} c_j / T^2 for every i."""
    x, T = c.costs, c.total
    f = alloc.value(c)
    g = _grads(alloc, c, step_scale)
    return g * x / T + f * _rest_sums(x) / T**2


def dp_cross(alloc: AllocationSpec, c: CostProfile, step_scale: float = 1.0) -> np.ndarray:
    """Jacobian J[i, j] = dp_j/dc_i (diagonal is dp_i/dc_i)."""
    x, T = c.costs, c.total
    f = alloc.value(c)
    g = _grads(alloc, c, step_scale)
    J = g[:, None] * x[None, :] / T - f * x[None, :] / T**2
    J[np.diag_indices(c.n)] = dp_own(alloc, c, step_scale)
    return J


def dlogq_own(alloc: AllocationSpec, c: CostProfile, K: int,
              step_scale: float = 1.0) -> np.ndarray:
    """d log q_i / dc_i; NaN where p_i is 0 or 1 or some p_j = 1."""
    p = difficulty(alloc, c).p
    J = dp_cross(alloc, c, step_scale)
    out = np.full(c.n, np.nan)
    for i in range(c.n):
        others = np.delete(np.arange(c.n), i)
        if not 0 < p[i] < 1 or np.any(p[others] >= 1):
            continue
        out[i] = ((1 / p[i] - (K - 1) / (1 - p[i])) * J[i, i]
                  - K * np.sum(J[i, others] / (1 - p[others])))
    return out


def dq_own(alloc: AllocationSpec, c: CostProfile, K: int, step_scale: float = 1.0) -> np.ndarray:
    """dq_i/dc_i via the log-space chain rule; NaN at singular points."""
    q = exact_win_prob(difficulty(alloc, c), K).q
    return q * dlogq_own(alloc, c, K, step_scale)


def _q_i(alloc, K, i):
    return lambda c: exact_win_prob(difficulty(alloc, c), K).q[i]


def _p_j(alloc, j):
    return lambda c: difficulty(alloc, c).p[j]


# -- condition checks ----------------------------------------------------


def check_prop1(alloc: AllocationSpec, params: AuctionParams,
                grid: Iterable[CostProfile], step_scale: float = 1.0) -> ConditionReport:
    """dq_i/dc_i <= K/A at every profile and miner."""
    grid = list(grid)
    K, A = params.horizon, params.prize
    bound = np.inf if A == 0 else K / A
    rep = ConditionReport("prop1", {**_grid_info(grid), "K": K, "A": A})
    for c in grid:
        try:
            d = dq_own(alloc, c, K, step_scale)
        except NonDifferentiableError:
            d = np.full(c.n, np.nan)
        for i in range(c.n):
            row = {"costs": c.costs.tolist(), "miner": i, "rhs": bound}
            if np.isnan(d[i]):
                rep.add(UNDEFINED, lhs=None, **row)
                continue
            fd = central_difference(_q_i(alloc, K, i), c, i, step_scale=step_scale)
            verdict = HOLDS if d[i] <= bound else FAILS
            rep.add(verdict, lhs=float(d[i]), margin=float(bound - d[i]),
                    **_fd_cols(d[i], fd), **row)
    return rep


def check_lemma1(alloc: AllocationSpec, grid: Iterable[CostProfile],
                 tol: float = 1e-9, step_scale: float = 1.0) -> ConditionReport:
    """dp_i/dc_i >= 0 under df/dc_i >= 0, and <= 1/c_tot when f is
    scaled-Lipschitz on the grid."""
    grid = list(grid)
    cert = certify_lipschitz(alloc, grid)
    rep = ConditionReport("lemma1", _grid_info(grid), extra={"certificate": cert.to_dict()})
    for c in grid:
        T = c.total
        for i in range(c.n):
            row = {"costs": c.costs.tolist(), "miner": i}
            try:
                g = alloc_grad(alloc, c, i, step_scale=step_scale)
                d = float(dp_own(alloc, c, step_scale)[i])
            except NonDifferentiableError:
                rep.add(UNDEFINED, **row)
                continue
            fd = central_difference(_p_j(alloc, i), c, i, step_scale=step_scale)
            vals = dict(lhs=d, rhs=1.0 / T, grad_f=g, **_fd_cols(d, fd))
            if g < 0:
                rep.add(VACUOUS, **vals, **row)
                continue
            margin = d + tol
            if cert.lipschitz:
                margin = min(margin, 1.0 / T + tol - d)
            rep.add(HOLDS if margin >= 0 else FAILS, margin=margin,
                    upper_checked=cert.lipschitz, **vals, **row)
    return rep


def check_lemma2(alloc: AllocationSpec, grid: Iterable[CostProfile],
                 tol: float = 1e-9, step_scale: float = 1.0) -> ConditionReport:
    """dp_j/dc_i >= -c_i / c_tot^2 for every ordered pair i != j."""
    grid = list(grid)
    rep = ConditionReport("lemma2", _grid_info(grid))
    for c in grid:
        T = c.total
        try:
            J = dp_cross(alloc, c, step_scale)
        except NonDifferentiableError:
            J = None
        for i in range(c.n):
            for j in range(c.n):
                if i == j:
                    continue
                row = {"costs": c.costs.tolist(), "miner": i, "other": j}
                if J is None:
                    rep.add(UNDEFINED, **row)
                    continue
                g = alloc_grad(alloc, c, i, step_scale=step_scale)
                lhs, rhs = float(J[i, j]), float(-c.costs[i] / T**2)
                fd = central_difference(_p_j(alloc, j), c, i, step_scale=step_scale)
                vals = dict(lhs=lhs, rhs=rhs, grad_f=g, **_fd_cols(lhs, fd))
                if g < 0:
                    rep.add(VACUOUS, **vals, **row)
                    continue
                margin = float(lhs - rhs + tol)
                rep.add(HOLDS if margin >= 0 else FAILS, margin=margin, **vals, **row)
    return rep


def logderiv_terms(alloc: AllocationSpec, c: CostProfile, K: int, i: int) -> dict | None:
    """Exact log-derivative of q_i and the two upper bounds used against it.

    Returns None at singular points. Keys: ``exact`` (d g_i/dc_i with
    g_i = log q_i), ``exact_over_g`` ((1/g_i) d g_i/dc_i), ``intermediate``,
    ``final`` (the closed-form majorant as stated) and ``final_sum`` (the
    sum of the two term-wise majorants before they were combined).
    """
    dv = difficulty(alloc, c)
    p, f = dv.p, dv.f
    T, ci, n = c.total, c.costs[i], c.n
    others = np.delete(np.arange(n), i)
    if not (0 < p[i] < 1 and 0 < f < 1 and ci > 0) or np.any(p[others] >= 1):
        return None
    exact = float(dlogq_own(alloc, c, K)[i])
    g = float(np.log(exact_win_prob(dv, K).q[i]))
    inter = ((1 - K * p[i]) / (p[i] * (1 - p[i])) / T
             + K * ci / T**2 * np.sum(1 / (1 - p[others])))
    final = (T**2 + K * ci * f * (n - 1)) / (ci * f * (1 - f) * T**2)
    final_sum = 1 / (ci * f * (1 - f)) + K * ci / T**2 * (n - 1) / (1 - f)
    return {
        "exact": exact,
        "exact_over_g": exact / g if g != 0 else None,
        "g": g,
        "intermediate": float(inter),
        "final": float(final),
        "final_sum": float(final_sum),
    }


def check_logderiv_bound(alloc: AllocationSpec, params: AuctionParams,
                         grid: Iterable[CostProfile]) -> ConditionReport:
    """Test the chain exact <= intermediate <= final at every point."""
    grid = list(grid)
    K = params.horizon
    rep = ConditionReport("logderiv", {**_grid_info(grid), "K": K})
    for c in grid:
        for i in range(c.n):
            row = {"costs": c.costs.tolist(), "miner": i}
            try:
                t = logderiv_terms(alloc, c, K, i)
            except NonDifferentiableError:
                t = None
            if t is None:
                rep.add(UNDEFINED, **row)
                continue
            fd = central_difference(lambda x: np.log(_q_i(alloc, K, i)(x)), c, i)
            link_ab = t["intermediate"] - t["exact"]
            link_bc = t["final"] - t["intermediate"]
            rep.add(
                HOLDS if link_ab >= 0 and link_bc >= 0 else FAILS,
                margin=float(min(link_ab, link_bc)),
                link_exact_le_intermediate=bool(link_ab >= 0),
                link_intermediate_le_final=bool(link_bc >= 0),
                **_fd_cols(t["exact"], fd),
                **t, **row,
            )
    return rep


def pi_identity_terms(solution: QreSolution, miner: int, mu: float | None = None):
    """Central-difference slope of the logit density and the product form
    (pi/mu)(A dQ/dc - K) at the interior grid points of one miner."""
    params = solution.params
    mu = params.mu if mu is None else mu
    x = solution.grid.points
    dens = solution.densities[miner].density()
    Q = solution.win_prob_on_grid[miner]
    span = x[2:] - x[:-2]
    slope = (dens[2:] - dens[:-2]) / span
    dQ = (Q[2:] - Q[:-2]) / span
    bracket = params.prize * dQ - params.horizon
    rhs = dens[1:-1] / mu * bracket
    return x[1:-1], slope, rhs, bracket


def pi_identity_residual(solution: QreSolution, lo_fraction: float = 0.25,
                         mu: float | None = None) -> float:
    """Max identity residual over interior bids at or above lo_fraction * c_max.

    Stencils near the zero bid see the jump of Q at c = 0 and a boundary
    layer of width one grid step, so they are excluded here.
    """
    worst = 0.0
    for i in range(len(solution.densities)):
        x, slope, rhs, _ = pi_identity_terms(solution, i, mu)
        m = x >= lo_fraction * solution.grid.c_max
        worst = max(worst, float(np.abs(slope - rhs)[m].max()))
    return worst


def check_pi_derivative(solution: QreSolution, mu: float | None = None,
                        lo_fraction: float = 0.25) -> ConditionReport:
    """Residual of the density-slope identity and the sign of the bracket.

    A point holds when ``A dQ/dc - K <= 0`` (density non-increasing there).
    Grid endpoints are undefined.
    """
    rep = ConditionReport("pi-derivative", {
        "grid_points": solution.grid.size, "c_max": solution.grid.c_max,
        "n_miners": len(solution.densities),
    })
    pts = solution.grid.points
    for i in range(len(solution.densities)):
        x, slope, rhs, bracket = pi_identity_terms(solution, i, mu)
        rep.add(UNDEFINED, miner=i, cost=float(pts[0]), reason="one-sided")
        for k in range(x.size):
            rep.add(HOLDS if bracket[k] <= 0 else FAILS, miner=i, cost=float(x[k]),
                    lhs=float(slope[k]), rhs=float(rhs[k]), bracket=float(bracket[k]),
                    residual=float(abs(slope[k] - rhs[k])), margin=float(-bracket[k]))
        rep.add(UNDEFINED, miner=i, cost=float(pts[-1]), reason="one-sided")
    res = [r["residual"] for r in rep.rows if "residual" in r]
    rep.extra = {
        "max_residual": max(res) if res else None,
        "window_lo_fraction": lo_fraction,
        "max_residual_window": pi_identity_residual(solution, lo_fraction, mu),
    }
    return rep


# -- quadratic feasibility ----------------------------------------------


def _quad_core(A, K, N, T, c_min):
    """Vectorised coefficients, roots and feasible interval on [0, 1]."""
    A, K, N, T, c_min = (np.asarray(v, dtype=float) for v in (A, K, N, T, c_min))
    b = A * (N - 1) / T**2 - 1.0
    d = A / (K * c_min)
    disc = b * b - 4.0 * d
    sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
    # stable roots: t = -(b + sign(b) sqrt(disc)) / 2, roots t and d / t
    t = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r_other = d / t
    r1 = np.minimum(t, r_other)
    r2 = np.maximum(t, r_other)
    real = disc >= 0
    lo = np.where(real, np.maximum(r1, 0.0), np.nan)
    hi = np.where(real, np.minimum(r2, 1.0), np.nan)
    feasible = real & (lo <= hi)
    return b, d, disc, np.where(real, r1, np.nan), np.where(real, r2, np.nan), lo, hi, feasible


SAMPLE_F = np.linspace(0.0, 1.0, 1001)


def _sampling_agrees(b, d, lo, hi, feasible):
    vals = SAMPLE_F**2 + b[..., None] * SAMPLE_F + d[..., None]
    sampled = vals <= 0
    by_roots = feasible[..., None] & (SAMPLE_F >= lo[..., None]) & (SAMPLE_F <= hi[..., None])
    return np.all(sampled == by_roots, axis=-1), sampled.any(axis=-1)


def completed_square_residual(b: float, d: float, f) -> np.ndarray:
    """|(f + b/2)^2 + d - b^2/4 - (f^2 + b f + d)| relative to term magnitude."""
    f = np.asarray(f, dtype=float)
    square = (f + b / 2) ** 2 + (d - b * b / 4)
    plain = f * f + b * f + d
    scale = np.maximum.reduce([np.ones_like(f), (f + b / 2) ** 2, np.full_like(f, b * b / 4),
                               np.full_like(f, abs(d))])
    return np.abs(square - plain) / scale


@dataclass
class QuadraticFeasibility:
    b: float
    d: float
    discriminant: float
    roots: tuple | None
    interval: tuple | None
    verdict: str
    margin: float
    identity_residual: float
    sampling_agrees: bool
    min_on_unit: float

    @property
    def coefficients(self) -> tuple:
        return (1.0, self.b, self.d)

    def to_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "b": self.b, "d": self.d,
            "discriminant": self.discriminant,
            "roots": list(self.roots) if self.roots else None,
            "feasible_interval": list(self.interval) if self.interval else None,
            "verdict": self.verdict,
            "margin": self.margin,
            "identity_residual": self.identity_residual,
            "sampling_agrees": self.sampling_agrees,
            "min_on_unit_interval": self.min_on_unit,
        }


INFEASIBLE = "infeasible-on-[0,1]"
FEASIBLE = "feasible-interval"


def quadratic_feasibility(params: AuctionParams, c: CostProfile, n: int | None = None) -> QuadraticFeasibility:
    """Where in [0, 1] can ``f^2 + b f + d <= 0`` hold for this profile?"""
    n = c.n if n is None else n
    if np.any(c.costs <= 0):
        raise ValueError("quadratic feasibility needs every c_i > 0 (c_min undefined)")
    A, K = params.prize, params.horizon
    b, d, disc, r1, r2, lo, hi, feas = (float(v) for v in _quad_core(A, K, n, c.total, c.c_min))
    feas = bool(feas)
    agrees, _ = _sampling_agrees(np.array(b), np.array(d), np.array(lo), np.array(hi), np.array(feas))
    f_check = np.linspace(0.0, 1.0, 20)
    vertex = min(max(-b / 2, 0.0), 1.0)
    return QuadraticFeasibility(
        b=b, d=d, discriminant=disc,
        roots=None if np.isnan(r1) else (r1, r2),
        interval=(lo, hi) if feas else None,
        verdict=FEASIBLE if feas else INFEASIBLE,
        margin=d - b * b / 4,
        identity_residual=float(completed_square_residual(b, d, f_check).max()),
        sampling_agrees=bool(agrees),
        min_on_unit=vertex**2 + b * vertex + d,
    )


@dataclass
class ScanBox:
    prize: tuple = (1.0, 100.0)
    horizon: tuple = (1, 64)
    miners: tuple = (2, 16)
    cost: tuple = (0.01, 10.0)
    resolution: int = 8

    def __post_init__(self):
        for name in ("prize", "horizon", "miners", "cost"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"scan box {name}: lower bound exceeds upper bound")
        if self.prize[0] <= 0 or self.cost[0] <= 0:
            raise ValueError("scan box prize and cost must be positive")
        if self.horizon[0] < 1 or self.miners[0] < 2:
            raise ValueError("scan box needs K >= 1 and N >= 2")
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise ValueError("scan resolution must be a positive integer")

    def axes(self) -> dict:
        r = self.resolution

        def geo(lo, hi):
            return np.geomspace(lo, hi, r) if lo != hi else np.array([float(lo)])

        def ints(vals):
            return np.unique(np.round(vals).astype(int))

        return {
            "prize": geo(*self.prize),
            "horizon": ints(geo(*self.horizon)),
            "miners": ints(np.linspace(self.miners[0], self.miners[1], r)),
            "cost": geo(*self.cost),
        }


@dataclass
class ScanReport:
    box: ScanBox
    cells: dict
    feasible_cells: list
    fraction_infeasible: float
    agreement_fraction: float

    def to_dict(self) -> dict:
        return {
            "box": {"prize": list(self.box.prize), "horizon": list(self.box.horizon),
                    "miners": list(self.box.miners), "cost": list(self.box.cost),
                    "resolution": self.box.resolution},
            "n_cells": int(self.cells["prize"].size),
            "fraction_infeasible": self.fraction_infeasible,
            "agreement_fraction": self.agreement_fraction,
            "feasible_cells": self.feasible_cells,
        }


def scan_cells(box: ScanBox) -> dict:
    """Cartesian cells; profile is one miner at c_min and N-1 at c_other >= c_min."""
    ax = box.axes()
    cost = ax["cost"]
    pairs = [(a, b) for a in range(cost.size) for b in range(a, cost.size)]
    cmin = np.array([cost[a] for a, _ in pairs])
    cother = np.array([cost[b] for _, b in pairs])
    A, K, N, P = np.meshgrid(ax["prize"], ax["horizon"], ax["miners"], np.arange(len(pairs)),
                             indexing="ij")
    A, K, N, P = (v.ravel() for v in (A, K, N, P))
    cm, co = cmin[P], cother[P]
    return {"prize": A, "horizon": K, "miners": N, "c_min": cm, "c_other": co,
            "c_tot": cm + (N - 1) * co}


def scan_theorem(box: ScanBox | None = None, workers: int = 1, chunk: int = 4096) -> ScanReport:
    """Quadratic feasibility over every cell of a parameter box."""
    box = ScanBox() if box is None else box
    cells = scan_cells(box)
    n = cells["prize"].size
    spans = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]

    def run(span):
        s, e = span
        out = _quad_core(cells["prize"][s:e], cells["horizon"][s:e], cells["miners"][s:e],
                         cells["c_tot"][s:e], cells["c_min"][s:e])
        agree, _ = _sampling_agrees(out[0], out[1], out[5], out[6], out[7])
        return out, agree

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    names = ("b", "d", "discriminant", "root_lo", "root_hi", "interval_lo", "interval_hi", "feasible")
    for k, name in enumerate(names):
        cells[name] = np.concatenate([p[0][k] for p in parts])
    cells["agrees"] = np.concatenate([p[1] for p in parts])
    cells["margin"] = cells["d"] - cells["b"] ** 2 / 4
    feasible = [
        {"prize": float(cells["prize"][k]), "horizon": int(cells["horizon"][k]),
         "miners": int(cells["miners"][k]), "c_min": float(cells["c_min"][k]),
         "c_other": float(cells["c_other"][k]),
         "interval": [float(cells["interval_lo"][k]), float(cells["interval_hi"][k])]}
        for k in np.flatnonzero(cells["feasible"])
    ]
    return ScanReport(
        box=box,
        cells=cells,
        feasible_cells=feasible,
        fraction_infeasible=float(1.0 - cells["feasible"].mean()),
        agreement_fraction=float(cells["agrees"].mean()),
    )
