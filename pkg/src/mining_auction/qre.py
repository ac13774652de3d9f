"""Logit quantal-response equilibrium over a discretised bid space."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import AllocationSpec, AuctionParams, CostProfile
from .race import expected_win_prob, win_prob_matrix

MIN_GRID_POINTS = 16
DEFAULT_GRID_POINTS = 129


@dataclass(frozen=True)
class BidGrid:
    points: np.ndarray
    spacing: str = "uniform"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).copy()
        if pts.ndim != 1 or pts.size < MIN_GRID_POINTS:
            raise ValueError(f"bid grid needs at least {MIN_GRID_POINTS} points")
        if pts[0] != 0.0:
            raise ValueError("bid grid must start at the zero bid")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("bid grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def c_max(self) -> float:
        return float(self.points[-1])

    @property
    def size(self) -> int:
        return self.points.size

    @classmethod
    def uniform(cls, c_max: float, n: int = DEFAULT_GRID_POINTS) -> "BidGrid":
        if not c_max > 0:
            raise ValueError("c_max must be positive")
        return cls(np.linspace(0.0, c_max, n), "uniform")

    @classmethod
    def log(cls, c_max: float, n: int = DEFAULT_GRID_POINTS, c_min: float | None = None) -> "BidGrid":
        """Zero bid followed by ``n - 1`` geometrically spaced positive bids."""
        c_min = c_max * 1e-3 if c_min is None else c_min
        return cls(np.concatenate([[0.0], np.geomspace(c_min, c_max, n - 1)]), "log")

    @classmethod
    def default(cls, params: AuctionParams, n: int = DEFAULT_GRID_POINTS) -> "BidGrid":
        # bids above A/K lose money even with certain victory
        return cls.uniform(params.prize / params.horizon, n)


@dataclass(frozen=True)
class BeliefDensity:
    grid: BidGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.shape != self.grid.points.shape:
            raise ValueError("one weight per grid point is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("belief weights must be non-negative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, grid: BidGrid, cost: float) -> "BeliefDensity":
        k = int(np.argmin(np.abs(grid.points - cost)))
        if not np.isclose(grid.points[k], cost, rtol=0, atol=1e-12):
            raise ValueError(f"cost {cost} is not a grid point")
        w = np.zeros(grid.size)
        w[k] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid: BidGrid) -> "BeliefDensity":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    def density(self) -> np.ndarray:
        """Weights per unit cost, using the local grid spacing as cell width."""
        return self.weights / np.gradient(self.grid.points)

    def mean(self) -> float:
        return float(self.weights @ self.grid.points)

    def tv_to_uniform(self) -> float:
        return 0.5 * float(np.abs(self.weights - 1.0 / self.grid.size).sum())


def logit_weights(utilities, mu: float) -> tuple[np.ndarray, float]:
    """Softmax of ``U / mu`` with max shift; returns (weights, log delta).

    ``delta`` is the normaliser in ``w_k = delta * exp(U_k / mu)``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    u = np.asarray(utilities, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("utilities must be finite")
    z = u / mu
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    return e / s, float(-m - np.log(s))


def logit_response(utilities, mu: float, grid: BidGrid) -> BeliefDensity:
    w, _ = logit_weights(utilities, mu)
    return BeliefDensity(grid, w)


@dataclass
class QreSolution:
    grid: BidGrid
    densities: list
    residual: float
    iterations: int
    converged: bool
    utilities_on_grid: np.ndarray
    win_prob_on_grid: np.ndarray
    residual_trace: list = field(default_factory=list)
    params: AuctionParams | None = None
    alloc: AllocationSpec | None = None
    damping: float = 0.5
    tol: float = 1e-8

    @property
    def weights(self) -> np.ndarray:
        return np.stack([d.weights for d in self.densities])


class _WinKernel:
    """Q_i on the bid grid as a function of the opponents' weights.

    With at most two opponents the exact product-grid kernel is tabulated
    once; otherwise opponent profiles are sampled with a fixed seed.
    """

    def __init__(self, alloc, grid: BidGrid, n_miners: int, K: int,
                 seed: int | None, mc_samples: int | None):
        self.alloc, self.grid, self.n, self.K = alloc, grid, n_miners, K
        self.seed, self.mc_samples = seed, mc_samples
        self.table = None
        pts = grid.points
        if mc_samples is None and n_miners <= 3:
            if n_miners == 2:
                self.table = win_prob_matrix(alloc, pts, pts[:, None], K)
            else:
                a, b = np.meshgrid(pts, pts, indexing="ij")
                opp = np.stack([a.ravel(), b.ravel()], axis=1)
                self.table = win_prob_matrix(alloc, pts, opp, K).reshape(pts.size, pts.size, pts.size)

    def __call__(self, opp_weights: list) -> np.ndarray:
        if self.table is not None:
            if self.n == 2:
                return self.table @ opp_weights[0]
            return np.einsum("kml,m,l->k", self.table, opp_weights[0], opp_weights[1])
        beliefs = [BeliefDensity(self.grid, w) for w in opp_weights]
        return expected_win_prob(self.alloc, self.grid.points, beliefs, self.K,
                                 mc_samples=self.mc_samples or 4096, seed=self.seed)


def _update(kernel: _WinKernel, W: np.ndarray, params: AuctionParams, workers: int):
    """One undamped logit update for every miner from the current weights."""
    n = W.shape[0]
    cost = params.horizon * kernel.grid.points

    def one(i):
        Q = kernel([W[j] for j in range(n) if j != i])
        U = params.prize * Q - cost
        w, _ = logit_weights(U, params.mu)
        return Q, U, w

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(n)))
    else:
        out = [one(i) for i in range(n)]
    Q, U, new = (np.stack(x) for x in zip(*out))
    return Q, U, new


def solve_qre(alloc: AllocationSpec, params: AuctionParams, n_miners: int,
              grid: BidGrid | None = None, damping: float = 0.5, tol: float = 1e-8,
              max_iter: int = 10_000, seed: int | None = None,
              mc_samples: int | None = None, workers: int = 1,
              init: np.ndarray | None = None) -> QreSolution:
    """Damped fixed-point iteration for the logit equilibrium.

    Every miner starts from the uniform density. Each sweep computes all
    miners' responses from the previous weights, then blends
    ``new = damping * response + (1 - damping) * old``. Non-convergence is
    reported through ``converged=False``, not raised.
    """
    if n_miners < 2:
        raise ValueError("need at least two miners")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    grid = BidGrid.default(params) if grid is None else grid
    kernel = _WinKernel(alloc, grid, n_miners, params.horizon, seed, mc_samples)
    if init is None:
        W = np.full((n_miners, grid.size), 1.0 / grid.size)
    else:
        W = np.array(init, dtype=float)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        _, _, new = _update(kernel, W, params, workers)
        blended = damping * new + (1.0 - damping) * W
        blended /= blended.sum(axis=1, keepdims=True)
        res = float(np.abs(blended - W).max())
        W = blended
        trace.append(res)
        if res <= tol:
            converged = True
            break
    Q, U, _ = _update(kernel, W, params, workers)
    return QreSolution(
        grid=grid,
        densities=[BeliefDensity(grid, w) for w in W],
        residual=trace[-1] if trace else float("inf"),
        iterations=it,
        converged=converged,
        utilities_on_grid=U,
        win_prob_on_grid=Q,
        residual_trace=trace,
        params=params,
        alloc=alloc,
        damping=damping,
        tol=tol,
    )


def reapply_update(solution: QreSolution, workers: int = 1) -> float:
    """Sup-norm change from one undamped update of a solved equilibrium."""
    kernel = _WinKernel(solution.alloc, solution.grid, len(solution.densities),
                        solution.params.horizon, None, None)
    W = solution.weights
    _, _, new = _update(kernel, W, solution.params, workers)
    return float(np.abs(new - W).max())


@dataclass
class NashGap:
    gaps: np.ndarray
    best_response: np.ndarray
    utilities: np.ndarray

    def is_equilibrium(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.gaps <= tol))


def nash_check(profile, alloc: AllocationSpec, params: AuctionParams, grid: BidGrid) -> NashGap:
    """Best-response gap of each miner at a pure cost profile.

    ``gap_i = max_{c' in grid} U_i(c', c_-i) - U_i(c_i, c_-i)``.
    """
    c = profile.costs if isinstance(profile, CostProfile) else np.asarray(profile, dtype=float)
    n = c.size
    gaps = np.empty(n)
    best = np.empty(n)
    current = np.empty(n)
    K, A = params.horizon, params.prize
    for i in range(n):
        opp = np.delete(c, i)[None, :]
        own = np.concatenate([[c[i]], grid.points])
        U = A * win_prob_matrix(alloc, own, opp, K)[:, 0] - K * own
        current[i] = U[0]
        k = int(np.argmax(U[1:]))
        best[i] = grid.points[k]
        gaps[i] = U[1:].max() - U[0]
    return NashGap(gaps, best, current)
