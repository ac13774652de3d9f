"""Scenario files: strict TOML documents with one table per section.

Unknown sections or keys are rejected; every numeric field is validated
against the invariants of the type it feeds, and failures name the
offending field path (``auction.prize`` and so on).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import CONDITION_IDS, ScanBox
from .model import AllocationSpec, AuctionParams, CostProfile
from .race import SEMANTICS


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class MinersSection:
    n: int | None = None
    costs: list | None = None
    cost_values: list | None = None


@dataclass
class AuctionSection:
    prize: float = 10.0
    horizon: int = 2
    mu: float = 1.0


@dataclass
class AllocationSection:
    family: str = "constant"
    params: dict = field(default_factory=lambda: {"value": 0.5})


@dataclass
class SolverSection:
    grid_points: int = 129
    c_max: float | None = None
    spacing: str = "uniform"
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 10_000
    mc_samples: int | None = None
    seed: int | None = None


@dataclass
class SimulationSection:
    trials: int = 100_000
    seed: int | None = None
    semantics: str = "exact-at-K"


@dataclass
class ScanSection:
    prize: list = field(default_factory=lambda: [1.0, 100.0])
    horizon: list = field(default_factory=lambda: [1, 64])
    miners: list = field(default_factory=lambda: [2, 16])
    cost: list = field(default_factory=lambda: [0.01, 10.0])
    resolution: int = 8


@dataclass
class AnalysisSection:
    conditions: list = field(default_factory=list)
    tol: float = 1e-9
    scan: ScanSection | None = None


@dataclass
class OutputSection:
    directory: str | None = None
    emit_plot_data: bool = False


@dataclass
class Scenario:
    miners: MinersSection = field(default_factory=MinersSection)
    auction: AuctionSection = field(default_factory=AuctionSection)
    allocation: AllocationSection = field(default_factory=AllocationSection)
    solver: SolverSection | None = None
    simulation: SimulationSection | None = None
    analysis: AnalysisSection | None = None
    output: OutputSection = field(default_factory=OutputSection)

    # typed views, built once validation has passed

    @property
    def params(self) -> AuctionParams:
        return AuctionParams(self.auction.prize, self.auction.horizon, self.auction.mu)

    @property
    def alloc(self) -> AllocationSpec:
        return AllocationSpec(self.allocation.family, self.allocation.params)

    @property
    def n_miners(self) -> int:
        if self.miners.n is not None:
            return self.miners.n
        return len(self.miners.costs)

    @property
    def profile(self) -> CostProfile | None:
        return None if self.miners.costs is None else CostProfile(self.miners.costs)

    @property
    def scan_box(self) -> ScanBox:
        s = self.analysis.scan
        return ScanBox(tuple(s.prize), tuple(s.horizon), tuple(s.miners), tuple(s.cost),
                       s.resolution)


_SECTIONS = {
    "miners": MinersSection,
    "auction": AuctionSection,
    "allocation": AllocationSection,
    "solver": SolverSection,
    "simulation": SimulationSection,
    "analysis": AnalysisSection,
    "output": OutputSection,
}


def _number(path, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ScenarioError(path, f"expected an integer, got {v!r}")
    return kind(v)


def _build(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ScenarioError(path, "expected a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            raise ScenarioError(f"{path}.{key}", "unknown key")
    kwargs = {}
    for key, value in raw.items():
        fpath = f"{path}.{key}"
        if cls is AnalysisSection and key == "scan":
            kwargs[key] = _build(ScanSection, value, fpath)
            continue
        default = names[key].default
        if default is dataclasses.MISSING:
            default = names[key].default_factory()
        hint = names[key].type
        if "int" in hint and "float" not in hint:
            kwargs[key] = _number(fpath, value, int)
        elif "float" in hint:
            kwargs[key] = _number(fpath, value)
        elif "bool" in hint:
            if not isinstance(value, bool):
                raise ScenarioError(fpath, f"expected true/false, got {value!r}")
            kwargs[key] = value
        elif "str" in hint:
            if not isinstance(value, str):
                raise ScenarioError(fpath, f"expected a string, got {value!r}")
            kwargs[key] = value
        elif "list" in hint:
            if not isinstance(value, list):
                raise ScenarioError(fpath, f"expected an array, got {value!r}")
            kwargs[key] = value
        elif "dict" in hint:
            if not isinstance(value, dict):
                raise ScenarioError(fpath, f"expected a table, got {value!r}")
            kwargs[key] = value
        else:  # pragma: no cover
            kwargs[key] = value
    return cls(**kwargs)


def _check(path: str, fn):
    try:
        return fn()
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None


def validate(s: Scenario) -> Scenario:
    a = s.auction
    if not a.prize > 0:
        raise ScenarioError("auction.prize", f"must be > 0, got {a.prize}")
    if a.horizon < 1:
        raise ScenarioError("auction.horizon", f"must be >= 1, got {a.horizon}")
    if not a.mu > 0:
        raise ScenarioError("auction.mu", f"must be > 0, got {a.mu}")
    _check("allocation", lambda: s.alloc)

    m = s.miners
    if m.costs is not None:
        for k, v in enumerate(m.costs):
            _number(f"miners.costs[{k}]", v)
        _check("miners.costs", lambda: s.profile)
        if m.n is not None and m.n != len(m.costs):
            raise ScenarioError("miners.n", "disagrees with the length of miners.costs")
    if m.n is not None and m.n < 2:
        raise ScenarioError("miners.n", "need at least two miners")
    if m.n is None and m.costs is None:
        raise ScenarioError("miners", "give n, costs or both")
    if m.cost_values is not None:
        for k, v in enumerate(m.cost_values):
            if _number(f"miners.cost_values[{k}]", v) < 0:
                raise ScenarioError(f"miners.cost_values[{k}]", "must be >= 0")
        if not any(v > 0 for v in m.cost_values):
            raise ScenarioError("miners.cost_values", "needs a positive value")

    if s.solver is not None:
        v = s.solver
        if v.grid_points < 16:
            raise ScenarioError("solver.grid_points", "must be >= 16")
        if v.c_max is not None and not v.c_max > 0:
            raise ScenarioError("solver.c_max", "must be > 0")
        if v.spacing not in ("uniform", "log"):
            raise ScenarioError("solver.spacing", "must be 'uniform' or 'log'")
        if not 0 < v.damping <= 1:
            raise ScenarioError("solver.damping", "must lie in (0, 1]")
        if not v.tol > 0:
            raise ScenarioError("solver.tol", "must be > 0")
        if v.max_iter < 1:
            raise ScenarioError("solver.max_iter", "must be >= 1")
        if v.mc_samples is not None and v.mc_samples < 2:
            raise ScenarioError("solver.mc_samples", "must be >= 2")

    if s.simulation is not None:
        v = s.simulation
        if v.trials < 1:
            raise ScenarioError("simulation.trials", "must be >= 1")
        if v.semantics not in SEMANTICS:
            raise ScenarioError("simulation.semantics", f"must be one of {list(SEMANTICS)}")
        if m.costs is None:
            raise ScenarioError("miners.costs", "required by the simulation section")

    if s.analysis is not None:
        v = s.analysis
        for k, cid in enumerate(v.conditions):
            if cid not in CONDITION_IDS:
                raise ScenarioError(f"analysis.conditions[{k}]", f"unknown condition {cid!r}")
        if not v.tol >= 0:
            raise ScenarioError("analysis.tol", "must be >= 0")
        if v.scan is not None:
            for name in ("prize", "horizon", "miners", "cost"):
                pair = getattr(v.scan, name)
                if len(pair) != 2:
                    raise ScenarioError(f"analysis.scan.{name}", "expected [low, high]")
                for k, x in enumerate(pair):
                    _number(f"analysis.scan.{name}[{k}]", x,
                            int if name in ("horizon", "miners") else float)
            if v.scan.resolution < 1:
                raise ScenarioError("analysis.scan.resolution", "must be >= 1")
            _check("analysis.scan", lambda: s.scan_box)
    return s


def parse(text: str) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("<document>", f"invalid TOML: {exc}") from None
    kwargs = {}
    for key, value in raw.items():
        if key not in _SECTIONS:
            raise ScenarioError(key, "unknown section")
        kwargs[key] = _build(_SECTIONS[key], value, key)
    return validate(Scenario(**kwargs))


def load(path) -> Scenario:
    return parse(Path(path).read_text())
