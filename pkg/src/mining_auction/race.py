"""Mining-race outcome probabilities: closed form, belief average, Monte Carlo.

Two race semantics are supported:

``exact-at-K``
    miner i wins iff its only success is at attempt K and nobody else
    succeeds in any of the K attempts. This is the closed form
    ``q_i = p_i (1-p_i)^(K-1) prod_{j!=i} (1-p_j)^K``.
``first-success``
    the race stops at the earliest attempt with any success; simultaneous
    solvers are split uniformly at random. Nobody wins if no success
    occurs within K attempts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import AllocationSpec, DifficultyVector

EXACT_AT_K = "exact-at-K"
FIRST_SUCCESS = "first-success"
SEMANTICS = (EXACT_AT_K, FIRST_SUCCESS)

CHUNK_SIZE = 1 << 15


class MissingSeedError(ValueError):
    """Monte Carlo integration was requested without a seed."""


@dataclass(frozen=True)
class WinProbabilities:
    q: np.ndarray
    semantics: str = EXACT_AT_K

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise ValueError(f"unknown semantics {self.semantics!r}")


@dataclass(frozen=True)
class RaceOutcome:
    winner: int | None
    attempt_of_success: int | None
    per_miner_success_counts: np.ndarray


@dataclass(frozen=True)
class SimulationResult:
    q_hat: np.ndarray
    stderr: np.ndarray
    wins: np.ndarray
    trials: int
    semantics: str


def _as_p(p) -> np.ndarray:
    if isinstance(p, DifficultyVector):
        p = p.p
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or np.any(p > 1):
        raise ValueError("difficulties must be a vector in [0, 1]")
    return p


def _log_q(p_own, log_rest, K: int):
    """log of p (1-p)^(K-1) * exp(K * log_rest), safe at p in {0, 1}."""
    with np.errstate(divide="ignore"):
        lp = np.log(p_own)
        tail = (K - 1) * np.log1p(-np.asarray(p_own)) if K > 1 else 0.0
    return lp + tail + K * log_rest


def exact_win_prob(p, K: int) -> WinProbabilities:
    """Closed-form exact-at-K win probabilities, evaluated in log space."""
    p = _as_p(p)
    if K < 1:
        raise ValueError("K must be >= 1")
    with np.errstate(divide="ignore"):
        l1 = np.log1p(-p)
    # sum over j != i of log(1 - p_j), guarding the -inf entries
    finite = np.where(np.isfinite(l1), l1, 0.0)
    n_inf = np.isneginf(l1)
    rest = finite.sum() - finite
    rest = np.where(n_inf.sum() - n_inf > 0, -np.inf, rest)
    q = np.exp(_log_q(p, rest, K))
    return WinProbabilities(q, EXACT_AT_K)


def first_success_win_prob(p, K: int) -> WinProbabilities:
    """Exact win probabilities under first-success semantics.

    At each attempt the chance that miner i succeeds and wins the uniform
    tie-break is ``p_i * E[1 / (1 + S_i)]`` with ``S_i`` the number of other
    simultaneous solvers; ``S_i`` is a Poisson-binomial count built by
    convolution.
    """
    p = _as_p(p)
    n = p.size
    q = np.empty(n)
    for i in range(n):
        dist = np.array([1.0])
        for j in range(n):
            if j != i:
                dist = np.convolve(dist, [1.0 - p[j], p[j]])
        share = np.sum(dist / np.arange(1, dist.size + 1))
        q[i] = p[i] * share
    none = np.prod(1.0 - p)
    if none == 1.0:
        return WinProbabilities(np.zeros(n), FIRST_SUCCESS)
    # geometric sum over attempts 1..K of none^(k-1)
    reach = (1.0 - none**K) / (1.0 - none)
    return WinProbabilities(q * reach, FIRST_SUCCESS)


def run_race(p, K: int, rng: np.random.Generator, semantics: str = EXACT_AT_K) -> RaceOutcome:
    """One race from an explicit N x K Bernoulli success matrix."""
    p = _as_p(p)
    a = rng.random((p.size, K)) < p[:, None]
    counts = a.sum(axis=1)
    if semantics == EXACT_AT_K:
        solo = (counts.sum() == 1)
        if solo:
            i = int(np.argmax(counts))
            if a[i, K - 1]:
                return RaceOutcome(i, K, counts)
        return RaceOutcome(None, None, counts)
    if semantics != FIRST_SUCCESS:
        raise ValueError(f"unknown semantics {semantics!r}")
    hits = np.flatnonzero(a.any(axis=0))
    if hits.size == 0:
        return RaceOutcome(None, None, counts)
    k = int(hits[0])
    solvers = np.flatnonzero(a[:, k])
    winner = int(solvers[rng.integers(solvers.size)]) if solvers.size > 1 else int(solvers[0])
    return RaceOutcome(winner, k + 1, counts)


def _chunk_wins(p: np.ndarray, K: int, n: int, seed: int, chunk: int, semantics: str) -> np.ndarray:
    # Each miner's Bernoulli stream is summarised by its first-success time,
    # drawn by inverse CDF; this has the same law as the a_{i,k} matrix.
    rng = np.random.default_rng([seed, chunk])
    u = 1.0 - rng.random((n, p.size))
    keys = rng.random((n, p.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.floor(np.log(u) / np.log1p(-p)) + 1.0
    t = np.where(p == 0.0, np.inf, t)
    t = np.where(p == 1.0, 1.0, t)
    wins = np.zeros(p.size, dtype=np.int64)
    if semantics == EXACT_AT_K:
        at_k = t == K
        others_late = (t > K).sum(axis=1) == p.size - 1
        ok = at_k & others_late[:, None]
        wins += ok.sum(axis=0)
        return wins
    first = t.min(axis=1)
    valid = first <= K
    tied = t == first[:, None]
    winner = np.argmax(np.where(tied, keys, -1.0), axis=1)
    np.add.at(wins, winner[valid], 1)
    return wins


def simulate_races(p, K: int, trials: int, seed: int, semantics: str = EXACT_AT_K,
                   workers: int = 1, chunk_size: int = CHUNK_SIZE) -> SimulationResult:
    """Seeded Monte Carlo estimate of the win probabilities.

    Trials are split into fixed-size chunks, chunk ``k`` drawing from the
    stream seeded by ``(seed, k)``; the result does not depend on ``workers``.
    """
    p = _as_p(p)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if semantics not in SEMANTICS:
        raise ValueError(f"unknown semantics {semantics!r}")
    if seed is None:
        raise MissingSeedError("simulate_races needs an explicit seed")
    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)
    jobs = [(p, K, n, int(seed), k, semantics) for k, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _chunk_wins(*a), jobs))
    else:
        parts = [_chunk_wins(*a) for a in jobs]
    wins = np.sum(parts, axis=0)
    q_hat = wins / trials
    stderr = np.sqrt(q_hat * (1.0 - q_hat) / trials)
    return SimulationResult(q_hat, stderr, wins, trials, semantics)


def _opponent_profiles(beliefs: Sequence, mc_samples: int | None, seed: int | None):
    """Opponent cost profiles and their weights (product grid or MC draws)."""
    if mc_samples is None and len(beliefs) <= 2:
        idx = [np.flatnonzero(b.weights > 0) for b in beliefs]
        mesh = [m.ravel() for m in np.meshgrid(*idx, indexing="ij")]
        pts = np.stack([b.grid.points[m] for b, m in zip(beliefs, mesh)], axis=1)
        wts = np.prod([b.weights[m] for b, m in zip(beliefs, mesh)], axis=0)
        return pts, wts, False
    if seed is None:
        raise MissingSeedError("Monte Carlo belief integration requires a seed")
    m = mc_samples or 4096
    rng = np.random.default_rng(seed)
    cols = [rng.choice(b.grid.points, size=m, p=b.weights) for b in beliefs]
    return np.stack(cols, axis=1), np.full(m, 1.0 / m), True


def win_prob_matrix(alloc: AllocationSpec, own_costs, opp_costs, K: int) -> np.ndarray:
    """q_i for every (own cost, opponent profile) pair, shape (len(own), M)."""
    own = np.asarray(own_costs, dtype=float)[:, None]
    opp = np.asarray(opp_costs, dtype=float)
    total = own + opp.sum(axis=1)[None, :]
    safe = np.where(total > 0, total, 1.0)
    f = alloc.of_total(safe)
    scale = np.where(total > 0, f / safe, 0.0)
    p_own = scale * own
    p_opp = scale[..., None] * opp[None, :, :]
    with np.errstate(divide="ignore"):
        rest = np.log1p(-p_opp).sum(axis=-1)
    return np.exp(_log_q(p_own, rest, K))


def expected_win_prob(alloc: AllocationSpec, own_cost, beliefs: Sequence, K: int,
                      mc_samples: int | None = None, seed: int | None = None,
                      return_stderr: bool = False):
    """Belief-averaged win probability Q_i(own_cost).

    ``beliefs`` holds one density per opponent (independent product). With
    at most two opponents the product grid is summed exactly; otherwise, or
    when ``mc_samples`` is given, opponent profiles are sampled with ``seed``.
    Miner labels do not matter: q_i is symmetric in the opponents.
    """
    scalar = np.ndim(own_cost) == 0
    own = np.atleast_1d(np.asarray(own_cost, dtype=float))
    opp, w, sampled = _opponent_profiles(beliefs, mc_samples, seed)
    Q = np.empty(own.size)
    se = np.zeros(own.size)
    step = max(1, 2_000_000 // max(len(w), 1))
    for s in range(0, own.size, step):
        qm = win_prob_matrix(alloc, own[s:s + step], opp, K)
        Q[s:s + step] = qm @ w
        if sampled:
            se[s:s + step] = qm.std(axis=1, ddof=1) / np.sqrt(len(w))
    if scalar:
        Q, se = float(Q[0]), float(se[0])
    return (Q, se) if return_stderr else Q


def utility(A: float, K: int, own_cost, Q):
    """Expected utility ``A * Q - K * c``."""
    return A * np.asarray(Q) - K * np.asarray(own_cost)


def rationality_check(utilities) -> np.ndarray:
    """Flag miners violating individual rationality (``U_i < 0``)."""
    return np.asarray(utilities, dtype=float) < 0.0
