"""Core auction types and the cost-to-difficulty mapping.

Every built-in allocation family depends on the bid profile only through the
total cost ``c_tot``, so ``f(c) = h(c_tot)`` and ``df/dc_i = h'(c_tot)`` for
every miner ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FAMILIES = ("constant", "saturating-linear", "inverse-total", "tabulated")


class NonDifferentiableError(ValueError):
    """Raised when a derivative is requested at a kink of the allocation."""


def fd_step(x: float) -> float:
    """Central-difference step used across the package."""
    return max(1e-6 * abs(x), 1e-9)


@dataclass(frozen=True)
class CostProfile:
    costs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("a cost profile needs at least two miners")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("costs must be finite and non-negative")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @property
    def n(self) -> int:
        return self.costs.size

    @property
    def total(self) -> float:
        return float(self.costs.sum())

    @property
    def c_min(self) -> float:
        """Smallest strictly positive cost."""
        pos = self.costs[self.costs > 0]
        if pos.size == 0:
            raise ValueError("c_min undefined: every cost is zero")
        return float(pos.min())

    def with_cost(self, i: int, value: float) -> "CostProfile":
        c = self.costs.copy()
        c[i] = value
        return CostProfile(c)


@dataclass(frozen=True)
class AuctionParams:
    prize: float
    horizon: int
    mu: float = 1.0

    def __post_init__(self):
        # prize = 0 is admitted as the decoupled limiting case of the solver
        if not (np.isfinite(self.prize) and self.prize >= 0):
            raise ValueError(f"prize must be >= 0, got {self.prize}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be > 0, got {self.mu}")
        object.__setattr__(self, "horizon", int(self.horizon))


@dataclass(frozen=True)
class AllocationSpec:
    """A difficulty allocation ``f(c)`` with gradient access.

    Families and their parameters:

    * ``constant``: ``value`` -- f = value.
    * ``saturating-linear``: ``beta`` -- f = min(1, beta * c_tot).
    * ``inverse-total``: ``alpha`` -- f = alpha / (alpha + c_tot).
    * ``tabulated``: ``knots``, ``values`` -- piecewise-linear in c_tot,
      flat outside the knot range, clamped to [0, 1].
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown allocation family {self.family!r}")
        p = dict(self.params)
        required = {
            "constant": {"value"},
            "saturating-linear": {"beta"},
            "inverse-total": {"alpha"},
            "tabulated": {"knots", "values"},
        }[self.family]
        if set(p) != required:
            raise ValueError(
                f"{self.family} takes parameters {sorted(required)}, got {sorted(p)}"
            )
        if self.family == "constant":
            if not 0.0 <= p["value"] <= 1.0:
                raise ValueError("constant allocation must lie in [0, 1]")
        elif self.family == "saturating-linear":
            if p["beta"] < 0:
                raise ValueError("beta must be non-negative")
        elif self.family == "inverse-total":
            if p["alpha"] <= 0:
                raise ValueError("alpha must be positive")
        else:
            knots = np.asarray(p["knots"], dtype=float)
            values = np.asarray(p["values"], dtype=float)
            if knots.ndim != 1 or knots.size < 2 or knots.shape != values.shape:
                raise ValueError("tabulated needs matching 1-d knots/values, length >= 2")
            if np.any(np.diff(knots) <= 0):
                raise ValueError("tabulated knots must be strictly increasing")
            p["knots"] = tuple(knots.tolist())
            p["values"] = tuple(values.tolist())
        object.__setattr__(self, "params", p)

    @classmethod
    def constant(cls, value: float) -> "AllocationSpec":
        return cls("constant", {"value": float(value)})

    @classmethod
    def saturating_linear(cls, beta: float) -> "AllocationSpec":
        return cls("saturating-linear", {"beta": float(beta)})

    @classmethod
    def inverse_total(cls, alpha: float) -> "AllocationSpec":
        return cls("inverse-total", {"alpha": float(alpha)})

    @classmethod
    def tabulated(cls, knots: Sequence[float], values: Sequence[float]) -> "AllocationSpec":
        return cls("tabulated", {"knots": list(knots), "values": list(values)})

    # -- evaluation as a function of total cost (vectorised) --------------

    def _raw(self, total):
        t = np.asarray(total, dtype=float)
        p = self.params
        if self.family == "constant":
            return np.full_like(t, p["value"])
        if self.family == "saturating-linear":
            return p["beta"] * t
        if self.family == "inverse-total":
            return p["alpha"] / (p["alpha"] + t)
        return np.interp(t, p["knots"], p["values"])

    def of_total(self, total):
        """f as a function of c_tot, clamped to [0, 1]."""
        return np.clip(self._raw(total), 0.0, 1.0)

    def clamped(self, total) -> np.ndarray:
        raw = self._raw(total)
        return (raw < 0.0) | (raw > 1.0)

    def slope_of_total(self, total):
        """Analytic d f / d c_tot; NaN where f is not differentiable.

        Tabulated tables have no analytic path, use :func:`alloc_grad`.
        """
        t = np.asarray(total, dtype=float)
        p = self.params
        if self.family == "constant":
            return np.zeros_like(t)
        if self.family == "saturating-linear":
            raw = p["beta"] * t
            out = np.where(raw < 1.0, p["beta"], 0.0)
            return np.where(raw == 1.0, np.nan, out)
        if self.family == "inverse-total":
            return -p["alpha"] / (p["alpha"] + t) ** 2
        raise NotImplementedError("tabulated family is differentiated numerically")

    def value(self, c: CostProfile) -> float:
        return float(self.of_total(c.total))

    def is_increasing(self) -> bool | None:
        """Structural monotonicity in each c_i; None when unknown a priori."""
        if self.family in ("constant", "saturating-linear"):
            return True
        if self.family == "inverse-total":
            return False
        return None

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {k: (list(v) if isinstance(v, tuple) else v)
                                                  for k, v in self.params.items()}}


@dataclass(frozen=True)
class DifficultyVector:
    p: np.ndarray
    f: float

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def difficulty(alloc: AllocationSpec, c: CostProfile) -> DifficultyVector:
    """Per-attempt success probabilities ``p_i = f(c) * c_i / c_tot``."""
    total = c.total
    if total <= 0:
        raise ValueError("degenerate cost profile: c_tot = 0")
    f = alloc.value(c)
    return DifficultyVector(f * c.costs / total, f)


def _tabulated_grad(alloc: AllocationSpec, total: float, step: float) -> float:
    knots = np.asarray(alloc.params["knots"])
    lo, hi = total - step, total + step
    inside = (knots > lo) & (knots < hi)
    if np.any(inside):
        raise NonDifferentiableError(
            f"c_tot={total:g} is within one step of a table knot"
        )
    ends = np.array([lo, hi])
    clamp = alloc.clamped(ends)
    if clamp[0] != clamp[1]:
        raise NonDifferentiableError(f"c_tot={total:g} sits on the [0,1] clamp")
    f_lo, f_hi = alloc.of_total(ends)
    return float((f_hi - f_lo) / (2 * step))


def alloc_grad(alloc: AllocationSpec, c: CostProfile, i: int, step: float | None = None,
               step_scale: float = 1.0) -> float:
    """Partial derivative of f with respect to c_i.

    Closed form for the analytic families. The tabulated family uses a
    central difference with relative step and raises
    :class:`NonDifferentiableError` when the stencil straddles a kink.
    """
    if not 0 <= i < c.n:
        raise IndexError(i)
    if alloc.family == "tabulated":
        h = fd_step(c.costs[i]) * step_scale if step is None else step
        return _tabulated_grad(alloc, c.total, h)
    g = float(alloc.slope_of_total(c.total))
    if np.isnan(g):
        raise NonDifferentiableError(f"{alloc.family} has a kink at c_tot={c.total:g}")
    return g


def central_difference(fn, c: CostProfile, i: int, step: float | None = None,
                       step_scale: float = 1.0) -> float:
    """Central finite difference of ``fn(CostProfile)`` along coordinate i."""
    x = c.costs[i]
    h = fd_step(x) * step_scale if step is None else step
    lo = max(x - h, 0.0)
    hi = x + h
    return (fn(c.with_cost(i, hi)) - fn(c.with_cost(i, lo))) / (hi - lo)


def profile_grid(values: Sequence[float], n: int) -> list[CostProfile]:
    """All profiles in ``values**n`` with a positive total, lexicographic order."""
    vals = np.asarray(values, dtype=float)
    mesh = np.stack(np.meshgrid(*([vals] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return [CostProfile(row) for row in mesh if row.sum() > 0]


@dataclass
class LipschitzCertificate:
    sup_scaled_slope: float
    lipschitz: bool
    monotone: bool
    violations: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    n_points: int = 0

    def to_dict(self) -> dict:
        return {
            "sup_scaled_slope": self.sup_scaled_slope,
            "lipschitz": self.lipschitz,
            "monotone": self.monotone,
            "violations": self.violations,
            "skipped": self.skipped,
            "n_points": self.n_points,
        }


def certify_lipschitz(alloc: AllocationSpec, domain: Iterable[CostProfile]) -> LipschitzCertificate:
    """Check ``|df/dc_i| * c_tot <= 1`` and ``df/dc_i >= 0`` over a grid.

    Clamped and non-differentiable points are skipped and listed.
    """
    domain = list(domain)
    if not domain:
        raise ValueError("empty certification domain")
    sup = 0.0
    monotone = True
    violations, skipped = [], []
    for c in domain:
        coords = c.costs.tolist()
        if bool(alloc.clamped(c.total)):
            skipped.append({"costs": coords, "reason": "clamped"})
            continue
        for i in range(c.n):
            try:
                g = alloc_grad(alloc, c, i)
            except NonDifferentiableError:
                skipped.append({"costs": coords, "miner": i, "reason": "kink"})
                continue
            scaled = abs(g) * c.total
            sup = max(sup, scaled)
            if g < 0:
                monotone = False
            if scaled > 1.0 or g < 0:
                violations.append(
                    {"costs": coords, "miner": i, "grad": g, "scaled": scaled}
                )
    return LipschitzCertificate(
        sup_scaled_slope=sup,
        lipschitz=sup <= 1.0,
        monotone=monotone,
        violations=violations,
        skipped=skipped,
        n_points=len(domain),
    )
